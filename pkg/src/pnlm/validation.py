"""Monte Carlo checks of the patch-difference model.

Samples ``D`` for two perfectly matching patches (pure noise, sigma = 1),
compares the samples with the fitted scaled chi-square density via a
Pearson goodness-of-fit test, and produces the variance map and the
averaged p-value table.
"""

import csv
import io
from functools import lru_cache
from dataclasses import dataclass

import numpy as np

from .special import regularized_upper_incomplete_gamma
from .stats import (
    DiffDistribution,
    PatchGeometry,
    build_distribution_table,
    cdf_D,
    overlap_count,
    quantile_D,
    variance_of_D,
)

DEFAULT_BINS = 50
_BLOCK = 20000
_OFFSET_BIAS = 1 << 16


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class GofReport:
    geometry: PatchGeometry
    offset: tuple
    n_samples: int
    statistic: float
    p_value: float
    sample_mean: float
    sample_variance: float


def _block_rng(seed, offset, block, stream=0):
    dy, dx = offset
    key = (int(seed), dy + _OFFSET_BIAS, dx + _OFFSET_BIAS, int(stream), int(block))
    return np.random.default_rng(np.random.SeedSequence(key))


def _term_blocks(offset, geometry, n_samples, seed, stream):
    """Yield (start, diff) blocks; ``diff`` holds pixel differences, shape (n, p, p)."""
    dy, dx = (int(v) for v in offset)
    if (dy, dx) == (0, 0):
        raise ValueError("the zero offset gives D = 0 identically")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    p = geometry.patch_side
    box_h, box_w = p + abs(dy), p + abs(dx)
    # patch origins inside the bounding box
    ly, ky = (0, dy) if dy >= 0 else (-dy, 0)
    lx, kx = (0, dx) if dx >= 0 else (-dx, 0)
    for block, start in enumerate(range(0, n_samples, _BLOCK)):
        n = min(_BLOCK, n_samples - start)
        z = _block_rng(seed, (dy, dx), block, stream).standard_normal((n, box_h, box_w))
        yield start, z[:, ly : ly + p, lx : lx + p] - z[:, ky : ky + p, kx : kx + p]


def sample_patch_difference(offset, geometry, n_samples, seed, stream=0):
    """Draw ``n_samples`` realizations of D at ``offset``.

    Each realization draws one unit-variance noise field over the bounding box
    of both patches, so pixels shared by the two patches are shared draws.
    Blocks of samples use seeds derived from ``(seed, offset, stream, block)``.
    """
    out = np.empty(n_samples)
    for start, diff in _term_blocks(offset, geometry, n_samples, seed, stream):
        out[start : start + len(diff)] = 0.5 * np.einsum("ijk,ijk->i", diff, diff)
    return out


def sample_pixel_terms(offset, geometry, n_samples, seed, stream=0):
    """The individual terms ``(n_l - n_k)^2 / 2`` behind sample_patch_difference.

    Returns shape ``(n_samples, p, p)``; summing over the last two axes gives
    exactly the samples of D for the same arguments.
    """
    p = geometry.patch_side
    out = np.empty((n_samples, p, p))
    for start, diff in _term_blocks(offset, geometry, n_samples, seed, stream):
        out[start : start + len(diff)] = 0.5 * diff * diff
    return out


@lru_cache(maxsize=256)
def _equal_probability_edges(dist, n_bins):
    return np.array([quantile_D(i / n_bins, dist) for i in range(1, n_bins)])


def gof_pvalue(samples, dist, n_bins=DEFAULT_BINS, geometry=None, offset=None):
    """Pearson chi-square test of ``samples`` against ``dist``.

    Uses ``n_bins`` equal-probability bins; the p-value is the upper tail of
    chi-square with ``n_bins - 1`` degrees of freedom.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n_bins < 5:
        raise ValueError("n_bins must be >= 5")
    if n == 0:
        raise ValueError("samples must be nonempty")
    expected = n / n_bins
    if expected < 5:
        raise InsufficientSamplesError(
            f"{n} samples give {expected:.2f} expected per bin over {n_bins} bins (need >= 5)"
        )
    edges = _equal_probability_edges(dist, n_bins)
    observed = np.bincount(np.searchsorted(edges, samples, side="right"), minlength=n_bins)
    statistic = float(np.sum((observed - expected) ** 2) / expected)
    p_value = regularized_upper_incomplete_gamma(0.5 * (n_bins - 1), 0.5 * statistic)
    return GofReport(
        geometry=geometry,
        offset=offset,
        n_samples=n,
        statistic=statistic,
        p_value=p_value,
        sample_mean=float(samples.mean()),
        sample_variance=float(samples.var(ddof=1)) if n > 1 else 0.0,
    )


def most_correlated_offsets(geometry):
    if geometry.search_radius < 1:
        raise ValueError("search radius must be >= 1")
    return [(0, 1), (0, -1), (1, 0), (-1, 0)]


def offset_report(offset, geometry, n_samples, seed, n_bins=DEFAULT_BINS, stream=0):
    dist = DiffDistribution.from_moments(
        geometry.patch_size,
        variance_of_D(offset, geometry),
        overlap_count(offset, geometry.patch_side),
    )
    samples = sample_patch_difference(offset, geometry, n_samples, seed, stream)
    return gof_pvalue(samples, dist, n_bins, geometry=geometry, offset=tuple(offset))


def table1_run(
    patch_sides=(3, 5, 7, 9),
    search_sides=(7, 11, 15, 21, 29),
    n_samples=100_000,
    seed=0,
    n_bins=DEFAULT_BINS,
):
    """Averaged p-values over the four most-correlated offsets.

    Returns ``(matrix, reports)``: ``matrix[i][j]`` belongs to
    ``patch_sides[i]`` and ``search_sides[j]``. Every cell draws its own
    samples (the search side is folded into the stream key).
    """
    matrix = np.zeros((len(patch_sides), len(search_sides)))
    reports = []
    for i, p in enumerate(patch_sides):
        for j, s in enumerate(search_sides):
            geometry = PatchGeometry.from_sides(p, s)
            cell = [
                offset_report(o, geometry, n_samples, seed, n_bins, stream=s)
                for o in most_correlated_offsets(geometry)
            ]
            reports.extend(cell)
            matrix[i, j] = np.mean([r.p_value for r in cell])
    return matrix, reports


def variance_map(geometry):
    """Variance of D over the search window; the center cell is NaN."""
    s = geometry.search_radius
    grid = np.full((2 * s + 1, 2 * s + 1), np.nan)
    for dy, dx in geometry.offsets():
        if (dy, dx) != (0, 0):
            grid[dy + s, dx + s] = variance_of_D((dy, dx), geometry)
    return grid


def histogram_density(samples, dist, n_bins=100, upper_q=0.9999):
    """Normalized histogram next to the model's mean density per bin.

    Returns ``(edges, counts, empirical_density, model_density)`` over
    ``[0, quantile(upper_q)]``.
    """
    samples = np.asarray(samples, dtype=float)
    edges = np.linspace(0.0, quantile_D(upper_q, dist), n_bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    widths = np.diff(edges)
    empirical = counts / (samples.size * widths)
    cdf = np.array([cdf_D(e, dist) for e in edges])
    model = np.diff(cdf) / widths
    return edges, counts, empirical, model


# CSV writers; column order is part of the output contract.

def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    return repr(float(x))


def variance_map_csv(geometry):
    """Long-format map: dy, dx, variance (center row left empty)."""
    rows = []
    for dy, dx in geometry.offsets():
        if (dy, dx) == (0, 0):
            rows.append([dy, dx, ""])
        else:
            rows.append([dy, dx, variance_of_D((dy, dx), geometry)])
    return _csv_text(["dy", "dx", "variance"], rows)


def distribution_table_csv(geometry):
    table = build_distribution_table(geometry)
    rows = [
        [dy, dx, d.overlap, _fmt(d.variance), _fmt(d.gamma), _fmt(d.eta)]
        for (dy, dx), d in table.items()
    ]
    return _csv_text(["dy", "dx", "overlap", "variance", "gamma", "eta"], rows)


def gof_reports_csv(reports):
    rows = [
        [
            r.geometry.patch_side,
            r.geometry.search_side,
            r.offset[0],
            r.offset[1],
            r.n_samples,
            _fmt(r.statistic),
            _fmt(r.p_value),
            _fmt(r.sample_mean),
            _fmt(r.sample_variance),
        ]
        for r in reports
    ]
    header = [
        "patch_side", "search_side", "dy", "dx", "n_samples",
        "statistic", "p_value", "sample_mean", "sample_variance",
    ]
    return _csv_text(header, rows)


def table1_csv(matrix, patch_sides, search_sides):
    rows = [[p] + [_fmt(v) for v in matrix[i]] for i, p in enumerate(patch_sides)]
    return _csv_text(["patch_side"] + [f"search_{s}" for s in search_sides], rows)


def histogram_csv(edges, counts, empirical, model):
    rows = [
        [_fmt(edges[i]), _fmt(edges[i + 1]), int(counts[i]), _fmt(empirical[i]), _fmt(model[i])]
        for i in range(len(counts))
    ]
    return _csv_text(["bin_lo", "bin_hi", "count", "empirical_density", "model_density"], rows)
