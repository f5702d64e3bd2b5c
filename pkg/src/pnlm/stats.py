"""Statistics of the normalized patch difference ``D`` between two noisy patches.

Under the perfect-match hypothesis each pixel term of ``D`` is chi-square with
one degree of freedom, but terms are correlated whenever the two patches
share pixels. ``D`` is modelled as ``gamma * chi2(eta)`` with ``gamma`` and
``eta`` matched to its exact mean and variance.
"""

import math
from dataclasses import dataclass

import numpy as np

from .special import (
    ln_gamma,
    regularized_lower_incomplete_gamma,
    regularized_upper_incomplete_gamma,
)

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class PatchGeometry:
    """Square patch of radius ``patch_radius`` inside a square search region."""

    patch_radius: int
    search_radius: int

    def __post_init__(self):
        for name in ("patch_radius", "search_radius"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")

    @classmethod
    def from_sides(cls, patch_side, search_side):
        for name, side in (("patch_side", patch_side), ("search_side", search_side)):
            if int(side) != side or side < 1 or side % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {side!r}")
        return cls(patch_side // 2, search_side // 2)

    @property
    def patch_side(self):
        return 2 * self.patch_radius + 1

    @property
    def search_side(self):
        return 2 * self.search_radius + 1

    @property
    def patch_size(self):
        return self.patch_side**2

    @property
    def search_size(self):
        return self.search_side**2

    def offsets(self):
        """All search offsets ``(dy, dx)`` in row-major order, center included."""
        s = self.search_radius
        return [(dy, dx) for dy in range(-s, s + 1) for dx in range(-s, s + 1)]


@dataclass(frozen=True)
class DiffDistribution:
    mean: float
    variance: float
    gamma: float
    eta: float
    overlap: int

    @classmethod
    def from_moments(cls, mean, variance, overlap=0):
        gamma, eta = fit_scaled_chi2(mean, variance)
        return cls(float(mean), float(variance), gamma, eta, int(overlap))

    @property
    def mode(self):
        return max(0.0, self.gamma * (self.eta - 2.0))


def chi2_distribution(dof):
    """Plain chi-square with ``dof`` degrees of freedom as a DiffDistribution."""
    return DiffDistribution.from_moments(dof, 2.0 * dof, overlap=0)


def overlap_count(offset, patch_side):
    """Number of pixels covered by both the patch at ``l`` and at ``l + offset``."""
    if int(patch_side) != patch_side or patch_side < 1 or patch_side % 2 == 0:
        raise ValueError(f"patch_side must be a positive odd integer, got {patch_side!r}")
    dy, dx = offset
    return max(0, patch_side - abs(dy)) * max(0, patch_side - abs(dx))


def variance_of_D(offset, geometry):
    """Exact variance ``2|P| + |O|`` of D for a nonzero offset."""
    dy, dx = offset
    if (dy, dx) == (0, 0):
        raise ValueError("variance_of_D is undefined at the zero offset")
    s = geometry.search_radius
    if abs(dy) > s or abs(dx) > s:
        raise ValueError(f"offset {offset} lies outside search radius {s}")
    return 2 * geometry.patch_size + overlap_count(offset, geometry.patch_side)


def fit_scaled_chi2(mean, variance):
    """Match ``gamma * chi2(eta)`` to the first two cumulants."""
    if not mean > 0 or not variance > 0:
        raise ValueError(f"mean and variance must be positive, got {mean!r}, {variance!r}")
    gamma = variance / (2.0 * mean)
    eta = 2.0 * mean * mean / variance
    return gamma, eta


def build_distribution_table(geometry):
    """Map every off-center search offset to its fitted distribution.

    Offsets with equal overlap share one DiffDistribution instance.
    """
    mean = geometry.patch_size
    by_overlap = {}
    table = {}
    for offset in geometry.offsets():
        if offset == (0, 0):
            continue
        overlap = overlap_count(offset, geometry.patch_side)
        dist = by_overlap.get(overlap)
        if dist is None:
            dist = DiffDistribution.from_moments(mean, 2 * mean + overlap, overlap)
            by_overlap[overlap] = dist
        table[offset] = dist
    return table


def _log_norm(dist):
    half = 0.5 * dist.eta
    return -half * _LN2 - ln_gamma(half) - math.log(dist.gamma)


def pdf_D(d, dist):
    """Density of ``gamma * chi2(eta)`` at ``d``; accepts scalars or arrays.

    Includes the ``1/gamma`` Jacobian, so the result integrates to one in ``d``.
    """
    x = np.asarray(d, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("pdf_D is defined for d >= 0 only")
    out = _pdf_unchecked(x, dist)
    return float(out) if out.ndim == 0 else out


def _pdf_unchecked(x, dist):
    """Vectorized density without domain checks (hot path of the denoiser)."""
    half = 0.5 * dist.eta
    u = x / dist.gamma
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_u = np.log(u)
        logpdf = (half - 1.0) * log_u - 0.5 * u + _log_norm(dist)
        out = np.exp(logpdf)
    if half == 1.0:
        out = np.where(u == 0, math.exp(_log_norm(dist)), out)
    elif half > 1.0:
        out = np.where(u == 0, 0.0, out)
    return out


def cdf_D(d, dist):
    if not d >= 0:
        raise ValueError(f"cdf_D is defined for d >= 0 only, got {d!r}")
    return regularized_lower_incomplete_gamma(0.5 * dist.eta, d / (2.0 * dist.gamma))


def sf_D(d, dist):
    """Survival function ``1 - cdf_D`` evaluated without cancellation."""
    if not d >= 0:
        raise ValueError(f"sf_D is defined for d >= 0 only, got {d!r}")
    return regularized_upper_incomplete_gamma(0.5 * dist.eta, d / (2.0 * dist.gamma))


def quantile_D(q, dist, tol=1e-10):
    """Invert cdf_D by bisection on ``[0, mean + 20 sd]``.

    Bisection runs until the bracket collapses to adjacent floats, so the
    result is as accurate in ``d`` as the cdf allows.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q!r}")
    lo = 0.0
    hi = dist.mean + 20.0 * math.sqrt(dist.variance)
    while cdf_D(hi, dist) < q:
        hi *= 2.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        p = cdf_D(mid, dist)
        if p == q:
            return mid
        if p < q:
            lo = mid
        else:
            hi = mid
    if abs(cdf_D(hi, dist) - q) > tol:
        raise ArithmeticError(f"quantile inversion failed for q={q}")
    return hi


def critical_interval(alpha, dist):
    """Equal-tail interval ``(d_lo, d_hi)`` holding probability ``alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if alpha == 1.0:
        return 0.0, math.inf
    tail = 0.5 * (1.0 - alpha)
    return quantile_D(tail, dist), quantile_D(1.0 - tail, dist)


def center_pixel_weight(geometry):
    """Self-weight: the plain chi-square density at its mean ``|P|``."""
    n = geometry.patch_size
    return pdf_D(float(n), chi2_distribution(n))
