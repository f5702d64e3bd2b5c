"""Grayscale image helpers: noise, padding, test patterns, quality metrics.

Images are 2-D ``float64`` numpy arrays indexed ``[row, col]`` with a nominal
intensity range of [0, 255]. Nothing here clamps; clamping happens only when
writing a file.
"""

import math
import warnings

import numpy as np

SIGMA_FLOOR = 1e-6


class DegenerateImageWarning(UserWarning):
    """Raised (as a warning) when a noise estimate hits its floor value."""


def as_image(img, name="image"):
    """Validate and return ``img`` as a 2-D float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def noise_field(shape, sigma, seed):
    """Seeded i.i.d. N(0, sigma^2) field of the given shape.

    Values are drawn in row-major pixel order from a Philox stream keyed by
    ``seed``, so the field depends only on ``(shape, sigma, seed)``.
    """
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be positive and finite, got {sigma!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    rng = np.random.Generator(np.random.Philox(seed))
    return sigma * rng.standard_normal(shape)


def add_gaussian_noise(clean, sigma, seed):
    clean = as_image(clean, "clean")
    return clean + noise_field(clean.shape, sigma, seed)


def pad_symmetric(img, radius):
    """Mirror-pad by ``radius`` without repeating the edge pixel."""
    img = as_image(img)
    radius = int(radius)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius >= min(img.shape):
        raise ValueError(
            f"radius {radius} too large for a {img.shape[1]}x{img.shape[0]} image"
        )
    if radius == 0:
        return img.copy()
    return np.pad(img, radius, mode="reflect")


def generate_checkerboard(width, height, block=16, low=64.0, high=192.0):
    if block < 1:
        raise ValueError("block must be >= 1")
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if not 0 <= low < high <= 255:
        raise ValueError("levels must satisfy 0 <= low < high <= 255")
    rows = np.arange(height)[:, None] // block
    cols = np.arange(width)[None, :] // block
    return np.where((rows + cols) % 2 == 0, float(low), float(high))


def psnr(reference, test, peak=255.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    reference = as_image(reference, "reference")
    test = as_image(test, "test")
    _same_shape(reference, test)
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=11, sigma=1.5):
    """Normalized 2-D Gaussian window (outer product of a 1-D kernel)."""
    g = _gaussian_kernel_1d(size, sigma)
    return np.outer(g, g)


def _gaussian_kernel_1d(size, sigma):
    x = np.arange(size, dtype=float) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, kernel_1d):
    # separable 'valid' correlation: rows first, then columns
    n = kernel_1d.size
    h, w = img.shape
    tmp = np.zeros((h - n + 1, w))
    for i, k in enumerate(kernel_1d):
        tmp += k * img[i : i + h - n + 1, :]
    out = np.zeros((h - n + 1, w - n + 1))
    for j, k in enumerate(kernel_1d):
        out += k * tmp[:, j : j + w - n + 1]
    return out


def ssim_map(reference, test, window=11, window_sigma=1.5, k1=0.01, k2=0.03, dynamic_range=255.0):
    """Local SSIM over every full window position (no padding)."""
    reference = as_image(reference, "reference")
    test = as_image(test, "test")
    _same_shape(reference, test)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not (k1 > 0 and k2 > 0 and dynamic_range > 0 and window_sigma > 0):
        raise ValueError("k1, k2, window_sigma and dynamic_range must be positive")
    if min(reference.shape) < window:
        raise ValueError(f"image {reference.shape} smaller than the {window}x{window} window")

    kern = _gaussian_kernel_1d(window, window_sigma)
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    mu_x = _filter_valid(reference, kern)
    mu_y = _filter_valid(test, kern)
    var_x = _filter_valid(reference * reference, kern) - mu_x * mu_x
    var_y = _filter_valid(test * test, kern) - mu_y * mu_y
    cov = _filter_valid(reference * test, kern) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(reference, test, window=11, window_sigma=1.5, k1=0.01, k2=0.03, dynamic_range=255.0):
    """Mean structural similarity with a Gaussian-weighted window."""
    return float(np.mean(ssim_map(reference, test, window, window_sigma, k1, k2, dynamic_range)))


_LAPLACIAN_MASK = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])


def laplacian_residual(img):
    """Valid-region response of the 3x3 noise mask, scaled to unit noise gain."""
    img = as_image(img)
    h, w = img.shape
    if h < 3 or w < 3:
        raise ValueError("noise estimation needs an image of at least 3x3")
    out = np.zeros((h - 2, w - 2))
    for i in range(3):
        for j in range(3):
            out += _LAPLACIAN_MASK[i, j] * img[i : i + h - 2, j : j + w - 2]
    return out / 6.0


def estimate_noise_sigma(img):
    """Robust sigma estimate: MAD of the Laplacian residual divided by 0.6745.

    A flat image yields ``SIGMA_FLOOR`` and emits DegenerateImageWarning.
    """
    r = laplacian_residual(img)
    mad = float(np.median(np.abs(r - np.median(r))))
    sigma = mad / 0.6745
    if not sigma > SIGMA_FLOOR:
        warnings.warn(
            "image has no measurable noise residual; using the sigma floor",
            DegenerateImageWarning,
            stacklevel=2,
        )
        return SIGMA_FLOOR
    return sigma
