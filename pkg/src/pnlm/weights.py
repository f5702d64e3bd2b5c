"""Classic exponential and probabilistic patch weights."""

import math
from dataclasses import dataclass, field

import numpy as np

from .stats import (
    PatchGeometry,
    _pdf_unchecked,
    build_distribution_table,
    center_pixel_weight,
    pdf_D,
)


@dataclass(frozen=True)
class ClassicWeight:
    """``exp(-ssd / h)`` with unit self-weight."""

    h: float
    cpw: float = 1.0

    def __post_init__(self):
        if not self.h > 0 or not math.isfinite(self.h):
            raise ValueError(f"temperature h must be positive and finite, got {self.h!r}")


@dataclass(frozen=True)
class ProbabilisticWeight:
    """Density of the patch difference under a perfect match.

    ``table`` maps every off-center offset to its DiffDistribution; the
    self-weight ``cpw`` is the chi-square density at its mean.
    """

    rho: float
    sigma_hat: float
    table: dict = field(repr=False)
    cpw: float

    def __post_init__(self):
        if not self.rho > 0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be positive and finite, got {self.rho!r}")
        if not self.sigma_hat > 0 or not math.isfinite(self.sigma_hat):
            raise ValueError(f"sigma_hat must be positive and finite, got {self.sigma_hat!r}")

    def covers(self, geometry):
        return all(o in self.table for o in geometry.offsets() if o != (0, 0))


def classic_weight(ssd, h):
    ssd = np.asarray(ssd, dtype=float)
    if np.any(ssd < 0):
        raise ValueError("ssd must be nonnegative")
    if not h > 0:
        raise ValueError("h must be positive")
    out = np.exp(-ssd / h)
    return float(out) if out.ndim == 0 else out


def probabilistic_weight(d_hat, offset, model):
    """Weight for a normalized patch difference computed with ``sigma_hat``."""
    offset = tuple(offset)
    if offset == (0, 0):
        return model.cpw
    try:
        dist = model.table[offset]
    except KeyError:
        raise KeyError(f"offset {offset} is not covered by the weight model") from None
    return pdf_D(np.asarray(d_hat, dtype=float) / model.rho**2, dist)


def offset_weights(ssd, offset, model):
    """Weights for an array of SSD values at one offset (denoiser hot path)."""
    if isinstance(model, ClassicWeight):
        return np.exp(-ssd / model.h)
    d_hat = ssd / (2.0 * model.sigma_hat**2)
    return _pdf_unchecked(d_hat / model.rho**2, model.table[offset])


def build_weight_model(kind, geometry, sigma_hat, rho=1.0, h_factor=1.0):
    """Assemble a weight model for ``kind`` in {"classic", "probabilistic"}.

    The classic temperature is ``h_factor * |P| * sigma_hat**2``.
    """
    if not isinstance(geometry, PatchGeometry):
        raise TypeError("geometry must be a PatchGeometry")
    if not sigma_hat > 0:
        raise ValueError(f"sigma_hat must be positive, got {sigma_hat!r}")
    if kind == "classic":
        if not h_factor > 0:
            raise ValueError(f"h_factor must be positive, got {h_factor!r}")
        return ClassicWeight(h=h_factor * geometry.patch_size * sigma_hat**2)
    if kind == "probabilistic":
        return ProbabilisticWeight(
            rho=float(rho),
            sigma_hat=float(sigma_hat),
            table=build_distribution_table(geometry),
            cpw=center_pixel_weight(geometry),
        )
    raise ValueError(f"unknown weight kind {kind!r}")
