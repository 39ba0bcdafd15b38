"""Pareto dominance, exact 2-D hypervolume, and improvement-based acquisitions.

All utilities use a maximization convention on both coordinates of the
objective space (scaled performance, scaled robustness). The hypervolume of a
front is measured against a reference point that every front point must weakly
dominate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr  # erf-based double-precision normal CDF

__all__ = [
    "ParetoFront",
    "dominates",
    "pareto_extract",
    "hypervolume_2d",
    "hv_improvement",
    "expected_hv_improvement",
    "ehi_batch",
    "expected_improvement",
]

# Below this standard deviation a marginal is treated as a point mass, so the
# acquisition degrades gracefully instead of dividing by ~0.
_POINT_MASS_STD = 1e-9


def dominates(a, b) -> bool:
    """Weak Pareto dominance: ``a >= b`` componentwise (maximization).

    Reflexive by construction; callers needing strict dominance must
    additionally require ``a != b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a >= b))


@dataclass(frozen=True)
class ParetoFront:
    """A set of mutually non-dominated 2-D points.

    ``points`` has shape (n, 2), sorted ascending in the first coordinate and
    therefore strictly descending in the second. May be empty.
    """

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("front contains non-finite points")
        if len(pts) > 1:
            if np.any(np.diff(pts[:, 0]) <= 0) or np.any(np.diff(pts[:, 1]) >= 0):
                raise ValueError("front points are not a sorted antichain")

    def __len__(self) -> int:
        return len(self.points)


def pareto_extract(ys) -> ParetoFront:
    """Extract the non-dominated points of a set of objective vectors.

    Strictly dominated points are removed and exact duplicates collapse to a
    single representative. Accepts any (n, 2) array-like, including empty.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1, 2)
    if len(ys) == 0:
        return ParetoFront()
    if not np.all(np.isfinite(ys)):
        raise ValueError("objective vectors must be finite")
    ys = np.unique(ys, axis=0)  # sorts lexicographically, collapses duplicates
    # Scan from high to low first coordinate: a point survives iff its second
    # coordinate strictly exceeds every second coordinate seen so far.
    keep = []
    best_second = -np.inf
    for i in range(len(ys) - 1, -1, -1):
        # Among equal first coordinates the lexicographic order puts the
        # largest second coordinate last, so it is scanned first and shadows
        # the rest.
        if ys[i, 1] > best_second:
            keep.append(i)
            best_second = ys[i, 1]
    keep.reverse()
    return ParetoFront(ys[keep])


def _check_reference(front: ParetoFront, ref) -> np.ndarray:
    ref = np.asarray(ref, dtype=float).reshape(2)
    if len(front) and not np.all(front.points >= ref):
        raise ValueError("every front point must weakly dominate the reference")
    return ref


def hypervolume_2d(front: ParetoFront, ref) -> float:
    """Exact area dominated by ``front`` relative to reference point ``ref``.

    Computed by the sorted staircase sweep: the union of boxes [ref, p] over
    front points decomposes into vertical strips between consecutive first
    coordinates.
    """
    ref = _check_reference(front, ref)
    area = 0.0
    prev_x = ref[0]
    # Sorted ascending in x, descending in y: the strip between consecutive
    # x-coordinates is covered exactly up to the y of its right endpoint.
    for x, y in front.points:
        area += (x - prev_x) * (y - ref[1])
        prev_x = x
    return float(area)


def hv_improvement(y, front: ParetoFront, ref) -> float:
    """Hypervolume added to ``front`` by a new objective vector ``y``.

    Zero iff ``y`` is weakly dominated by some front point. ``y`` must weakly
    dominate the reference, like every front point.
    """
    ref = _check_reference(front, ref)
    y = np.asarray(y, dtype=float).reshape(2)
    if not np.all(y >= ref):
        raise ValueError("candidate point must weakly dominate the reference")
    base = hypervolume_2d(front, ref)
    merged = pareto_extract(np.vstack([front.points, y[None, :]]) if len(front) else y[None, :])
    return float(hypervolume_2d(merged, ref) - base)


def _cell_grid(front: ParetoFront, ref):
    """Breakpoints and low corners of the non-dominated cell grid.

    The plane above ``ref`` is partitioned by the front coordinates into an
    (n+1) x (n+1) grid; cell (j, k) is outside the dominated region iff
    j + k >= n. Returns the x and y breakpoints (length n+2, last entry +inf).
    """
    pts = front.points
    n = len(pts)
    xs = np.concatenate([[ref[0]], pts[:, 0], [np.inf]])
    ys = np.concatenate([[ref[1]], pts[::-1, 1], [np.inf]])
    return n, xs, ys


def _interval_mean(lo, hi, mean, std):
    """E[clip(Y - lo, 0, hi - lo)] for Y ~ N(mean, std^2), elementwise.

    ``lo``/``hi`` broadcast against ``mean``/``std``; ``hi`` may be +inf.
    Degenerate std falls back to the deterministic clip value.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    lo = np.broadcast_to(lo, np.broadcast_shapes(np.shape(lo), mean.shape))
    hi = np.broadcast_to(hi, lo.shape)
    out = np.empty(np.broadcast_shapes(lo.shape, mean.shape), dtype=float)

    degenerate = std <= _POINT_MASS_STD
    mean_b = np.broadcast_to(mean, out.shape)
    std_b = np.broadcast_to(std, out.shape)
    deg_b = np.broadcast_to(degenerate, out.shape)

    with np.errstate(invalid="ignore"):
        out[deg_b] = np.clip(mean_b[deg_b] - lo[deg_b], 0.0, hi[deg_b] - lo[deg_b])

    g = ~deg_b
    if np.any(g):
        m, s, a, b = mean_b[g], std_b[g], lo[g], hi[g]
        za = (a - m) / s
        zb = (b - m) / s
        cdf_a, cdf_b = ndtr(za), ndtr(zb)
        pdf_a = np.exp(-0.5 * za * za) / np.sqrt(2.0 * np.pi)
        pdf_b = np.where(np.isinf(zb), 0.0, np.exp(-0.5 * np.minimum(zb, 700.0) ** 2)) / np.sqrt(2.0 * np.pi)
        # E[(Y-a)+ truncated at b] + (b-a) P(Y > b); the b = inf branch loses
        # its second term.
        trunc = (m - a) * (cdf_b - cdf_a) + s * (pdf_a - pdf_b)
        tail = np.zeros_like(trunc)
        fin = ~np.isinf(b)
        tail[fin] = (b[fin] - a[fin]) * (1.0 - cdf_b[fin])
        out[g] = np.maximum(trunc + tail, 0.0)
    return out


def ehi_batch(means, variances, front: ParetoFront, ref) -> np.ndarray:
    """Expected hypervolume improvement for a batch of independent Gaussians.

    ``means``/``variances`` have shape (m, 2); the two outputs are treated as
    independent (only marginal variances enter the integral). The expectation
    is exact: the non-dominated region decomposes into grid cells, and each
    cell contributes a product of one-dimensional truncated-Gaussian means.
    """
    ref = _check_reference(front, ref)
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    variances = np.asarray(variances, dtype=float).reshape(-1, 2)
    if np.any(variances < 0):
        raise ValueError("variances must be nonnegative")
    stds = np.sqrt(variances)

    n, xs, ys = _cell_grid(front, ref)
    # T1[c, j] = E[clip(Y1 - xs[j], 0, xs[j+1] - xs[j])], same for T2 on ys.
    t1 = _interval_mean(xs[None, :-1], xs[None, 1:], means[:, :1], stds[:, :1])
    t2 = _interval_mean(ys[None, :-1], ys[None, 1:], means[:, 1:], stds[:, 1:])
    # Cell (j, k) lies outside the dominated staircase iff j + k >= n.
    mask = np.add.outer(np.arange(n + 1), np.arange(n + 1)) >= n
    return np.einsum("cj,jk,ck->c", t1, mask.astype(float), t2)


def expected_hv_improvement(posterior, front: ParetoFront, ref) -> float:
    """EHI of a single bivariate posterior (mean vector + covariance matrix).

    Only the diagonal of the covariance is used; off-diagonal correlation does
    not enter the closed-form integral.
    """
    mean = np.asarray(posterior.mean, dtype=float).reshape(2)
    var = np.clip(np.diag(np.asarray(posterior.cov, dtype=float)), 0.0, None)
    return float(ehi_batch(mean[None, :], var[None, :], front, ref)[0])


def expected_improvement(mean, std, best):
    """Scalar expected improvement over ``best`` (maximization), vectorized.

    For ``std = 0`` returns ``max(mean - best, 0)``.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be nonnegative")
    diff = mean - best
    out = np.maximum(diff, 0.0)
    g = std > _POINT_MASS_STD
    if np.any(g):
        diff_g = np.broadcast_to(diff, out.shape)[g]
        std_g = np.broadcast_to(std, out.shape)[g]
        z = diff_g / std_g
        pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        vals = diff_g * ndtr(z) + std_g * pdf
        out = np.array(out, dtype=float)
        out[g] = np.maximum(vals, 0.0)
    return out if out.ndim else float(out)
