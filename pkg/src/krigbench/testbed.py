"""Benchmark surfaces: analytic test functions, an M/M/1 queue simulator,
and the least-squares hyperplane baseline.

Every test function is deterministic, takes points in the unit cube,
and rescales internally to the physical ranges listed on its
:class:`TestFunction` entry. Evaluators are vectorized: they accept a
single d-vector or an (m, d) array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _prepare(x, dims: int):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != dims:
        raise ValueError(f"expected points with {dims} coordinates, got shape {x.shape}")
    return pts, single


def _rescale(pts: np.ndarray, ranges) -> np.ndarray:
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    return lo + pts * (hi - lo)


# unit-cube coordinate order: r_w, r, T_u, H_u, T_l, H_l, L, K_w
BOREHOLE_RANGES = (
    (0.05, 0.15),
    (100.0, 50_000.0),
    (63_070.0, 115_600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12_045.0),
)

# indices of the coordinates kept by the 4-D projection: r_w, T_u, T_l, L
_BOREHOLE_4D_KEEP = (0, 2, 4, 6)


def borehole(x):
    """Water flow through a borehole, 8 inputs on the unit cube."""
    pts, single = _prepare(x, 8)
    rw, r, tu, hu, tl, hl, length, kw = _rescale(pts, BOREHOLE_RANGES).T
    log_ratio = np.log(r / rw)
    denom = log_ratio * (1.0 + 2.0 * length * tu / (log_ratio * rw**2 * kw) + tu / tl)
    out = 2.0 * np.pi * tu * (hu - hl) / denom
    return float(out[0]) if single else out


def borehole_4d(x):
    """Borehole restricted to r_w, T_u, T_l, L; the other inputs sit at
    the middle of their ranges."""
    pts, single = _prepare(x, 4)
    full = np.full((pts.shape[0], 8), 0.5)
    full[:, _BOREHOLE_4D_KEEP] = pts
    out = borehole(full)
    return float(out[0]) if single else out


OTL_RANGES = (
    (50.0, 150.0),   # R_b1
    (25.0, 70.0),    # R_b2
    (0.5, 3.0),      # R_f
    (1.2, 2.5),      # R_c1
    (0.25, 1.2),     # R_c2
    (50.0, 300.0),   # beta
)


def otl_circuit(x, literal: bool = False):
    """Midpoint voltage of an output transformer-less push-pull circuit.

    Six inputs: five resistances and the gain. The standard form feeds
    the divider voltage V_b1 = 12 R_b2 / (R_b1 + R_b2) into the first
    term; ``literal=True`` instead evaluates a published variant that
    places R_b1 there directly.
    """
    pts, single = _prepare(x, 6)
    rb1, rb2, rf, rc1, rc2, beta = _rescale(pts, OTL_RANGES).T
    vb1 = 12.0 * rb2 / (rb1 + rb2)
    bgain = beta * (rc2 + 9.0)
    denom = bgain + rf
    first = rb1 + 0.74 if literal else vb1 + 0.74
    out = first * bgain / denom + 11.35 * rf / denom + 0.74 * rf * bgain / (denom * rc1)
    return float(out[0]) if single else out


def otl_circuit_literal(x):
    return otl_circuit(x, literal=True)


def dette_pepelyshev(x):
    """Curved 8-dimensional test surface on the unit cube."""
    pts, single = _prepare(x, 8)
    x1, x2, x3 = pts[:, 0], pts[:, 1], pts[:, 2]
    out = (
        4.0 * (x1 - 2.0 + 8.0 * x2 - 8.0 * x2**2) ** 2
        + (3.0 - 4.0 * x2) ** 2
        + 16.0 * np.sqrt(x3 + 1.0) * (2.0 * x3 - 1.0) ** 2
    )
    for k in range(4, 9):
        inner = np.sum(pts[:, 2:k], axis=1)  # x_3 + ... + x_k (1-based)
        out = out + k * np.log1p(inner)
    return float(out[0]) if single else out


def _morris_coefficients():
    """Linear, pair, and triple coefficients of the Morris surface (1-based rules)."""
    idx = np.arange(1, 21)
    beta1 = np.where(idx <= 10, 20.0, (-1.0) ** idx)
    beta2 = np.zeros((20, 20))
    for i in range(1, 21):
        for j in range(i + 1, 21):
            beta2[i - 1, j - 1] = -15.0 if (i <= 6 and j <= 6) else (-1.0) ** (i + j)
    return beta1, beta2


_MORRIS_BETA1, _MORRIS_BETA2 = _morris_coefficients()
_MORRIS_WARPED = (3, 5, 7)  # 1-based indices with the nonlinear warp


def _morris_w(pts: np.ndarray) -> np.ndarray:
    w = 2.0 * (pts - 0.5)
    for i in _MORRIS_WARPED:
        xi = pts[:, i - 1]
        w[:, i - 1] = 2.0 * (1.1 * xi / (xi + 0.1) - 0.5)
    return w


def morris(x):
    """20-dimensional screening surface with warped coordinates.

    Triple interactions carry coefficient 10 only when all three
    indices are at most 5, so that term reduces to the third elementary
    symmetric polynomial of the first five warped coordinates; pairs
    use -15 when both indices are at most 6 and (-1)^(i+j) otherwise.
    """
    pts, single = _prepare(x, 20)
    w = _morris_w(pts)
    linear = w @ _MORRIS_BETA1
    pair = np.einsum("mi,ij,mj->m", w, _MORRIS_BETA2, w)
    w5 = w[:, :5]
    p1 = np.sum(w5, axis=1)
    p2 = np.sum(w5 * w5, axis=1)
    p3 = np.sum(w5**3, axis=1)
    e3 = (p1**3 - 3.0 * p1 * p2 + 2.0 * p3) / 6.0
    out = linear + pair + 10.0 * e3 + 5.0 * w[:, 0] * w[:, 1] * w[:, 2] * w[:, 3]
    return float(out[0]) if single else out


@dataclass(frozen=True)
class TestFunction:
    """A named deterministic surface with its physical input ranges."""

    name: str
    dims: int
    ranges: tuple
    evaluator: Callable

    def __call__(self, x):
        return self.evaluator(x)


_UNIT = (0.0, 1.0)

FUNCTIONS = {
    fn.name: fn
    for fn in (
        TestFunction("borehole", 8, BOREHOLE_RANGES, borehole),
        TestFunction("borehole4", 4, tuple(BOREHOLE_RANGES[i] for i in _BOREHOLE_4D_KEEP), borehole_4d),
        TestFunction("otl", 6, OTL_RANGES, otl_circuit),
        TestFunction("otl-literal", 6, OTL_RANGES, otl_circuit_literal),
        TestFunction("dettepep", 8, (_UNIT,) * 8, dette_pepelyshev),
        TestFunction("morris", 20, (_UNIT,) * 20, morris),
    )
}


def get_function(name: str) -> TestFunction:
    try:
        return FUNCTIONS[name]
    except KeyError:
        valid = ", ".join(sorted(FUNCTIONS))
        raise KeyError(f"unknown test function {name!r}; valid names: {valid}") from None


# ---------------------------------------------------------------------------
# M/M/1 queue
# ---------------------------------------------------------------------------

def mm1_analytic(x: float):
    """Steady-state mean and variance of the M/M/1 queue population.

    Service rate 1, arrival rate ``x`` in [0, 1): mean x/(1-x),
    variance x/(1-x)^2.
    """
    if not 0.0 <= x < 1.0:
        raise ValueError(f"arrival rate must lie in [0, 1), got {x}")
    return x / (1.0 - x), x / (1.0 - x) ** 2


@dataclass(frozen=True)
class Mm1Config:
    """One M/M/1 simulation replicate.

    ``n_customers`` sets the horizon; the first ``warmup_fraction`` of
    the arrival window is discarded before time-averaging.
    """

    arrival_rate: float
    n_customers: int = 2000
    warmup_fraction: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.arrival_rate < 1.0:
            raise ValueError(f"arrival rate must lie in [0, 1), got {self.arrival_rate}")
        if self.n_customers < 2:
            raise ValueError("need at least 2 customers")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup fraction must lie in [0, 1)")


def mm1_simulate(cfg: Mm1Config) -> float:
    """Time-average number of customers in an M/M/1 queue.

    Runs the Lindley recursion in vectorized form (waiting time equals
    the running maximum of a random walk) and integrates the population
    over the post-warmup observation window via sojourn overlaps.
    Deterministic for a given seed.
    """
    x = cfg.arrival_rate
    if x == 0.0:
        return 0.0
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_customers
    inter = rng.exponential(1.0 / x, size=n)
    service = rng.exponential(1.0, size=n)
    arrivals = np.cumsum(inter)
    # queueing delay of customer i: reflected random walk of S_{i-1} - A_i
    steps = service[:-1] - inter[1:]
    walk = np.concatenate(([0.0], np.cumsum(steps)))
    wait = walk - np.minimum.accumulate(walk)
    departures = arrivals + wait + service
    t0 = cfg.warmup_fraction * arrivals[-1]
    t1 = arrivals[-1]
    overlap = np.minimum(departures, t1) - np.maximum(arrivals, t0)
    total = float(np.sum(np.maximum(overlap, 0.0)))
    return total / (t1 - t0)


# ---------------------------------------------------------------------------
# Linear-model baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """Hyperplane fit: intercept followed by one slope per dimension."""

    coef: np.ndarray
    rank_deficient: bool = False


def lm_fit(x, y) -> LinearModel:
    """Ordinary least squares hyperplane through (x, y).

    Rank-deficient systems are flagged and get the minimum-norm
    solution rather than an error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("x must be (n, d) and y its n-vector of outputs")
    design = np.column_stack([np.ones(x.shape[0]), x])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    return LinearModel(coef=coef, rank_deficient=rank < design.shape[1])


def lm_predict(model: LinearModel, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.shape[1] != model.coef.size - 1:
        raise ValueError(
            f"points have {pts.shape[1]} columns, model expects {model.coef.size - 1}"
        )
    out = model.coef[0] + pts @ model.coef[1:]
    return float(out[0]) if single else out
