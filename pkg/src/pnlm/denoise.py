"""Non-local means engine with pluggable weights and aggregation.

Each output pixel is the weighted mean (or weighted median) of the noisy
pixels in its search window, with weights derived from the summed squared
difference between the two surrounding patches.
"""

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .image import as_image, estimate_noise_sigma, pad_symmetric
from .stats import PatchGeometry, critical_interval, quantile_D
from .weights import ClassicWeight, ProbabilisticWeight, build_weight_model, offset_weights

AGGREGATORS = ("mean", "median")
REJECTION_MODES = ("off", "upper", "two-sided")

# method name -> (weight kind, aggregator)
METHODS = {
    "nlm-mean": ("classic", "mean"),
    "pnlm-mean": ("probabilistic", "mean"),
    "nlm-median": ("classic", "median"),
    "pnlm-median": ("probabilistic", "median"),
}

# rows per work unit; fixed so the output never depends on the worker count
_BAND_ROWS = 16


class DenoiseError(RuntimeError):
    pass


@dataclass(frozen=True)
class Rejection:
    """Early rejection of improbable patches.

    ``upper`` drops candidates whose rescaled difference exceeds the
    ``alpha`` quantile; ``two-sided`` drops both tails of the equal-tail
    interval of mass ``alpha``.
    """

    mode: str = "off"
    alpha: float = None

    def __post_init__(self):
        if self.mode not in REJECTION_MODES:
            raise ValueError(f"rejection mode must be one of {REJECTION_MODES}, got {self.mode!r}")
        if self.mode != "off":
            if self.alpha is None or not 0.0 < self.alpha <= 1.0:
                raise ValueError(f"alpha must lie in (0, 1] for {self.mode} rejection")

    @property
    def active(self):
        return self.mode != "off"


@dataclass(frozen=True)
class DenoiseConfig:
    geometry: PatchGeometry
    weight_model: object
    aggregator: str = "mean"
    rejection: Rejection = field(default_factory=Rejection)

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}")
        if not isinstance(self.weight_model, (ClassicWeight, ProbabilisticWeight)):
            raise TypeError("weight_model must be a ClassicWeight or ProbabilisticWeight")
        if self.rejection.active and not isinstance(self.weight_model, ProbabilisticWeight):
            raise ValueError("early rejection requires probabilistic weights")
        if isinstance(self.weight_model, ProbabilisticWeight) and not self.weight_model.covers(
            self.geometry
        ):
            raise ValueError("weight model table does not cover the search region")


@dataclass
class RunStats:
    pixels: int
    candidates_total: int
    candidates_rejected: int
    seconds: float

    def to_json(self):
        return json.dumps(asdict(self))


def make_config(
    noisy,
    method="pnlm-mean",
    patch_side=7,
    search_side=21,
    sigma=None,
    rho=1.0,
    h_factor=1.0,
    reject="off",
    alpha=None,
):
    """Build a DenoiseConfig for a named method.

    With ``sigma=None`` the noise level is estimated from ``noisy``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    kind, aggregator = METHODS[method]
    geometry = PatchGeometry.from_sides(patch_side, search_side)
    sigma_hat = estimate_noise_sigma(noisy) if sigma is None else float(sigma)
    model = build_weight_model(kind, geometry, sigma_hat, rho=rho, h_factor=h_factor)
    return DenoiseConfig(geometry, model, aggregator, Rejection(reject, alpha))


def patch_ssd(padded, l, k, geometry):
    """Sum of squared differences between the patches centred at ``l`` and ``k``.

    ``l`` and ``k`` are ``(row, col)`` positions in ``padded``.
    """
    padded = np.asarray(padded, dtype=float)
    r = geometry.patch_radius
    h, w = padded.shape
    for name, (row, col) in (("l", l), ("k", k)):
        if row - r < 0 or col - r < 0 or row + r >= h or col + r >= w:
            raise IndexError(f"patch around {name}={(row, col)} leaves the image")
    a = padded[l[0] - r : l[0] + r + 1, l[1] - r : l[1] + r + 1]
    b = padded[k[0] - r : k[0] + r + 1, k[1] - r : k[1] + r + 1]
    return float(np.sum((a - b) ** 2))


def patch_difference_D(ssd, sigma):
    """Normalize an SSD by ``2 sigma^2``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    return ssd / (2.0 * sigma * sigma)


def method_noise(source, denoised):
    """``source - denoised`` shifted by +128 for display."""
    source = as_image(source, "source")
    denoised = as_image(denoised, "denoised")
    if source.shape != denoised.shape:
        raise ValueError(f"dimension mismatch: {source.shape} vs {denoised.shape}")
    return source - denoised + 128.0


def _rejection_bounds(config):
    """Per-distribution (lo, hi) acceptance bounds on ``d_hat / rho^2``."""
    rej = config.rejection
    if not rej.active:
        return None
    bounds = {}
    for dist in set(config.weight_model.table.values()):
        if rej.alpha == 1.0:
            bounds[dist] = (0.0, math.inf)
        elif rej.mode == "upper":
            bounds[dist] = (0.0, quantile_D(rej.alpha, dist))
        else:
            bounds[dist] = critical_interval(rej.alpha, dist)
    return bounds


def _box_sum(sq, r, rows, cols):
    """Direct (2r+1)x(2r+1) window sums, rows then columns."""
    acc = sq[0:rows].copy()
    for t in range(1, 2 * r + 1):
        acc += sq[t : t + rows]
    out = acc[:, 0:cols].copy()
    for t in range(1, 2 * r + 1):
        out += acc[:, t : t + cols]
    return out


def _denoise_band(padded, config, bounds, r0, r1, width):
    geometry = config.geometry
    model = config.weight_model
    r = geometry.patch_radius
    big = geometry.patch_radius + geometry.search_radius
    rows = r1 - r0
    center = padded[big + r0 : big + r1, big : big + width]
    a = padded[big + r0 - r : big + r1 + r, big - r : big + width + r]
    prob = isinstance(model, ProbabilisticWeight)
    scale = 1.0 / (2.0 * model.sigma_hat**2 * model.rho**2) if prob else None
    median = config.aggregator == "median"

    if median:
        values, weights = [], []
    else:
        num = np.zeros((rows, width))
        den = np.full((rows, width), model.cpw)
    rejected = 0

    for offset in geometry.offsets():
        dy, dx = offset
        if offset == (0, 0):
            if median:
                values.append(center)
                weights.append(np.full((rows, width), model.cpw))
            continue
        b = padded[big + r0 - r + dy : big + r1 + r + dy, big - r + dx : big + width + r + dx]
        diff = a - b
        ssd = _box_sum(diff * diff, r, rows, width)
        w = offset_weights(ssd, offset, model)
        if bounds is not None:
            lo, hi = bounds[model.table[offset]]
            d = ssd * scale
            drop = (d > hi) | (d < lo)
            n_drop = int(np.count_nonzero(drop))
            if n_drop:
                rejected += n_drop
                w = np.where(drop, 0.0, w)
        if not np.all(np.isfinite(w)):
            raise DenoiseError(f"non-finite weight at offset {offset}")
        yk = padded[big + r0 + dy : big + r1 + dy, big + dx : big + width + dx]
        if median:
            values.append(yk)
            weights.append(w)
        else:
            num += w * (yk - center)
            den += w

    if median:
        out = _weighted_median(np.stack(values), np.stack(weights))
    else:
        out = center + num / den
    return out, rejected


def _weighted_median(values, weights):
    """Smallest value whose cumulative weight reaches half the total.

    Candidates are sorted by value with ties kept in offset order.
    """
    order = np.argsort(values, axis=0, kind="stable")
    v = np.take_along_axis(values, order, axis=0)
    cum = np.cumsum(np.take_along_axis(weights, order, axis=0), axis=0)
    idx = np.argmax(cum >= 0.5 * cum[-1], axis=0)
    return np.take_along_axis(v, idx[None], axis=0)[0]


def default_threads():
    env = os.environ.get("PNLM_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("PNLM_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def denoise(noisy, config, threads=None):
    """Denoise ``noisy`` according to ``config``.

    Returns ``(image, RunStats)``. Work is split into fixed row bands, so the
    result is bit-identical for any ``threads`` value.
    """
    noisy = as_image(noisy, "noisy")
    t0 = time.perf_counter()
    geometry = config.geometry
    height, width = noisy.shape
    big = geometry.patch_radius + geometry.search_radius
    if big >= min(height, width):
        raise ValueError(
            f"image {width}x{height} too small for patch {geometry.patch_side} "
            f"and search {geometry.search_side}"
        )
    padded = pad_symmetric(noisy, big)
    bounds = _rejection_bounds(config)
    threads = default_threads() if threads is None else int(threads)

    bands = [(r0, min(r0 + _BAND_ROWS, height)) for r0 in range(0, height, _BAND_ROWS)]

    def work(band):
        return _denoise_band(padded, config, bounds, band[0], band[1], width)

    if threads <= 1:
        results = [work(b) for b in bands]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, bands))

    out = np.empty_like(noisy)
    rejected = 0
    for (r0, r1), (band_out, band_rej) in zip(bands, results):
        out[r0:r1] = band_out
        rejected += band_rej
    stats = RunStats(
        pixels=height * width,
        candidates_total=height * width * geometry.search_size,
        candidates_rejected=rejected,
        seconds=time.perf_counter() - t0,
    )
    return out, stats
