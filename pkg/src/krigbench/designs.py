"""Space-filling designs and output scaling.

Designs are Latin hypercube samples on the unit cube whose minimum
pairwise distance is improved by seeded point-exchange hill climbing.
Outputs are standardized to mean 0 / range 1 before fitting, with the
record needed to undo the transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Offsets are snapped to this grid so the scaled range is exactly 1.0
# in floating point while the scaled mean stays below 1e-12.
_OFFSET_GRID = 2.0 ** 40


@dataclass(frozen=True)
class ScalingRecord:
    """Affine output transform ``y_scaled = (y - y_mean) / y_range``.

    ``y_mean`` is the subtracted offset (within 1e-12 of the sample
    mean) and ``y_range`` the original range, or 1.0 when the data were
    constant (then ``degenerate`` is set).
    """

    y_mean: float
    y_range: float
    degenerate: bool = False

    def apply(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_range

    def invert(self, y_scaled):
        return np.asarray(y_scaled, dtype=float) * self.y_range + self.y_mean

    def apply_variance(self, var):
        return np.asarray(var, dtype=float) / (self.y_range * self.y_range)

    def invert_variance(self, var_scaled):
        return np.asarray(var_scaled, dtype=float) * (self.y_range * self.y_range)


def scale_outputs(y):
    """Standardize outputs to mean 0 (within 1e-12) and range exactly 1.

    Returns ``(y_scaled, record)``. Constant inputs scale to zero with
    range 1 and a degenerate flag on the record.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("y must be a nonempty 1-D vector")
    lo = float(np.min(y))
    hi = float(np.max(y))
    rng = hi - lo
    if rng == 0.0:
        record = ScalingRecord(y_mean=lo, y_range=1.0, degenerate=True)
        return np.zeros_like(y), record
    z = (y - lo) / rng
    # min(z) is 0.0 and max(z) is 1.0 bitwise; shifting by a coarse-grid
    # constant s keeps max - min == 1.0 exact because 1 - s and -s are
    # both representable with slack.
    s = np.round(float(np.mean(z)) * _OFFSET_GRID) / _OFFSET_GRID
    record = ScalingRecord(y_mean=lo + s * rng, y_range=rng)
    return z - s, record


def latin_hypercube(n: int, d: int, rng) -> np.ndarray:
    """Plain LHS: per column, a permutation of cell midpoints jittered in-cell."""
    out = np.empty((n, d))
    for k in range(d):
        perm = rng.permutation(n)
        jitter = rng.uniform(-0.5, 0.5, size=n)
        out[:, k] = (perm + 0.5 + jitter) / n
    return out


def maximin_lhs(n: int, d: int, seed=None, iters: int = 10_000) -> np.ndarray:
    """Latin hypercube on [0,1]^d optimized for minimum pairwise distance.

    Starting from a jittered LHS, ``iters`` candidate swaps exchange a
    single coordinate between two rows (which preserves the Latin
    structure). A swap is accepted only if the minimum pairwise
    distance does not decrease and a repulsion criterion (sum of
    inverse squared distances) improves, so the maximin objective is
    monotone over accepted swaps. Deterministic for a given seed.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    x = latin_hypercube(n, d, rng)
    if n < 2 or iters <= 0:
        return x

    d2 = _squared_distances(x)
    np.fill_diagonal(d2, np.inf)
    inv_sum = float(np.sum(1.0 / d2))  # 2x the pair sum; consistent throughout
    gmin = float(d2.min())
    gpair = np.unravel_index(int(np.argmin(d2)), d2.shape)

    for _ in range(iters):
        # bias half the proposals toward a row of the current closest pair
        if rng.random() < 0.5:
            i = int(gpair[int(rng.integers(2))])
        else:
            i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        k = int(rng.integers(d))
        xi, xj = x[i, k], x[j, k]
        if xi == xj:
            continue
        col = x[:, k]
        # swapping x[i,k] and x[j,k] only changes distances touching rows i, j;
        # d(i, j) itself is invariant under the exchange
        delta_i = (xj - col) ** 2 - (xi - col) ** 2
        new_i = d2[i] + delta_i
        new_j = d2[j] - delta_i
        new_i[i] = np.inf
        new_j[j] = np.inf
        new_i[j] = d2[i, j]
        new_j[i] = d2[j, i]
        touched_min = min(float(new_i.min()), float(new_j.min()))
        if touched_min < gmin:
            continue
        old_rows = float(np.sum(1.0 / d2[i]) + np.sum(1.0 / d2[j]))
        new_rows = float(np.sum(1.0 / new_i) + np.sum(1.0 / new_j))
        new_inv_sum = inv_sum + 2.0 * (new_rows - old_rows)
        if not new_inv_sum < inv_sum:
            continue
        # accept
        assert touched_min >= gmin
        x[i, k], x[j, k] = xj, xi
        d2[i, :] = new_i
        d2[:, i] = new_i
        d2[j, :] = new_j
        d2[:, j] = new_j
        d2[i, j] = d2[j, i] = new_i[j]
        inv_sum = new_inv_sum
        if i in gpair or j in gpair or touched_min == gmin:
            gmin = float(d2.min())
            gpair = np.unravel_index(int(np.argmin(d2)), d2.shape)
    return x


def _squared_distances(x: np.ndarray) -> np.ndarray:
    """Dense pairwise squared distances via the inner-product identity."""
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def min_pairwise_distance(x) -> float:
    """Smallest Euclidean distance between any two rows."""
    x = np.asarray(x, dtype=float)
    d2 = _squared_distances(x)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(d2.min()))
