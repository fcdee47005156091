"""Hyperparameter estimation by profile-likelihood minimization.

The objective is the deviance

    logdet(R_delta) + n * log((y - mu 1)' R_delta^{-1} (y - mu 1))

with the constant-mean estimate mu profiled out at every evaluation.
Minimization runs in a configurable search transform of theta (log10
by default, which centers the search box), uses the analytic gradient
via trace identities, and restarts a bounded quasi-Newton solver from
cluster centers of space-filling candidate points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .designs import latin_hypercube
from .kernels import KernelWorkspace
from .linalg import NotPositiveDefiniteError, cholesky, solve_spd, spd_inverse
from .nugget import NuggetStrategy, realize_nugget

SEARCH_TRANSFORMS = ("log10", "log", "raw")

# generous theta box adopted for every dimension
THETA_LOWER = 1e-4
THETA_UPPER = 1e3

# bounds for the extra search coordinates (natural log space)
NUGGET_LOG_BOUNDS = (math.log(1e-9), math.log(1e-1))
SCALE_LOG_BOUNDS = (math.log(1e-6), math.log(1e6))

_SURVIVOR_FRACTION = 0.2
_BIG_OBJECTIVE = 1e100

_LN10 = math.log(10.0)


class EstimationError(Exception):
    pass


class ObjectiveNonFiniteError(EstimationError):
    """The objective is not finite at the requested start point."""


class AllStartsFailedError(EstimationError):
    """Every multistart launch point had a non-finite objective."""


@dataclass(frozen=True)
class FitConfig:
    """Controls for the maximum-likelihood search.

    ``bounds`` are per-theta-dimension (lo, hi) pairs in the search
    space; when omitted the default theta box [1e-4, 1e3] is mapped
    through the transform. ``step_tol`` is the relative
    objective-decrease tolerance of the quasi-Newton solver.
    ``n_lhs_candidates`` defaults to 40 per search dimension (including
    the log-nugget coordinate when the nugget is estimated).
    """

    search_transform: str = "log10"
    bounds: tuple | None = None
    n_starts: int = 5
    n_lhs_candidates: int | None = None
    n_clusters: int | None = None
    max_iters: int = 200
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    nugget: NuggetStrategy = field(default_factory=lambda: NuggetStrategy.estimated(1e-6))
    seed: int = 0

    def __post_init__(self):
        if self.search_transform not in SEARCH_TRANSFORMS:
            raise ValueError(
                f"unknown search transform {self.search_transform!r}; "
                f"choose from {SEARCH_TRANSFORMS}"
            )
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")

    def with_nugget(self, nugget: NuggetStrategy) -> "FitConfig":
        return replace(self, nugget=nugget)


def to_search(theta, transform: str) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if transform == "log10":
        return np.log10(theta)
    if transform == "log":
        return np.log(theta)
    return theta.copy()


def from_search(s, transform: str) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if transform == "log10":
        return 10.0 ** s
    if transform == "log":
        return np.exp(s)
    return s.copy()


def _dtheta_dsearch(theta, transform: str) -> np.ndarray:
    if transform == "log10":
        return theta * _LN10
    if transform == "log":
        return theta.copy()
    return np.ones_like(theta)


def default_bounds(x, kernel_family: str = "pexp", search_transform: str = "log10") -> np.ndarray:
    """Per-dimension search bounds from the generous theta box [1e-4, 1e3]."""
    x = np.asarray(x, dtype=float)
    d = x.shape[1] if x.ndim == 2 else 1
    box = to_search([THETA_LOWER, THETA_UPPER], search_transform)
    return np.tile(box, (d, 1))


class DevianceProblem:
    """Deviance and gradient machinery bound to one data set.

    The search vector is the transformed theta, optionally followed by
    one extra coordinate: the natural-log nugget (estimated scalar
    mode) or the natural-log noise scale (per-point mode with a jointly
    estimated multiplier). Factorization failures surface as +inf
    objective values and are tallied on ``n_factorization_failures``.
    """

    def __init__(self, x, y, family="pexp", exponent=2.0,
                 nugget: NuggetStrategy | None = None, search_transform="log10"):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError("x must be (n, d) with y its n-vector of outputs")
        self.workspace = KernelWorkspace(x, family, exponent)
        self.y = y
        self.n, self.dims = x.shape
        self.family = family
        self.exponent = exponent
        self.nugget = nugget if nugget is not None else NuggetStrategy.estimated(1e-6)
        self.transform = search_transform
        self._ones = np.ones(self.n)
        self._rss_floor = np.finfo(float).eps * max(float(y @ y), np.finfo(float).tiny)
        self.n_factorization_failures = 0
        if self.nugget.is_per_point:
            if self.nugget.per_point_noise.shape[0] != self.n:
                raise ValueError("per-point noise length must match the design size")
            self.extra = "scale" if self.nugget.estimate_scale else None
        elif self.nugget.mode == "estimated":
            self.extra = "nugget"
        else:
            self.extra = None

    @property
    def n_search(self) -> int:
        return self.dims + (1 if self.extra else 0)

    def split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_search,):
            raise ValueError(f"search vector must have length {self.n_search}")
        if self.extra:
            return from_search(z[:-1], self.transform), float(z[-1])
        return from_search(z, self.transform), None

    def search_bounds(self, config: FitConfig) -> np.ndarray:
        if config.bounds is not None:
            theta_bounds = np.asarray(config.bounds, dtype=float)
            if theta_bounds.shape != (self.dims, 2):
                raise ValueError(f"bounds must have shape ({self.dims}, 2)")
        else:
            theta_bounds = default_bounds(self.workspace.x, self.family, self.transform)
        if np.any(theta_bounds[:, 0] >= theta_bounds[:, 1]):
            raise ValueError("each bound pair needs lo < hi")
        if self.extra == "nugget":
            return np.vstack([theta_bounds, NUGGET_LOG_BOUNDS])
        if self.extra == "scale":
            return np.vstack([theta_bounds, SCALE_LOG_BOUNDS])
        return theta_bounds

    def _delta(self, r0, extra):
        strategy = self.nugget
        if strategy.is_per_point:
            if strategy.estimate_scale:
                return math.exp(extra) * strategy.per_point_noise
            return self._self_consistent_delta(r0)
        if strategy.mode == "estimated":
            return math.exp(extra)
        return realize_nugget(strategy, r0, self.n)

    def _self_consistent_delta(self, r0):
        """Unit-scale per-point mode: delta = noise / sigma2 with sigma2
        solved by fixed-point iteration of the profile estimate."""
        noise = self.nugget.per_point_noise
        var_y = float(np.var(self.y))
        t = max(var_y, 1e-12)
        for _ in range(25):
            state = self._profile(r0 + np.diag(noise / t))
            if state is None:
                return noise / t
            t_new = max(state[3] / self.n, 1e-300)
            if abs(t_new - t) <= 1e-10 * t:
                t = t_new
                break
            t = t_new
        return noise / t

    def _profile(self, r_delta):
        """Factor R_delta and profile out the mean; None when not SPD."""
        try:
            factor = cholesky(r_delta)
        except NotPositiveDefiniteError:
            self.n_factorization_failures += 1
            return None
        sols = solve_spd(factor, np.column_stack([self._ones, self.y]))
        u, v = sols[:, 0], sols[:, 1]
        sum_u = float(self._ones @ u)
        mu = float(self._ones @ v) / sum_u
        alpha = v - mu * u
        rss = float((self.y - mu) @ alpha)
        return factor, mu, alpha, rss

    def value(self, z) -> float:
        theta, extra = self.split(z)
        r0 = self.workspace.corr(theta)
        delta = self._delta(r0, extra)
        state = self._profile(_add_diag(r0, delta))
        if state is None:
            return np.inf
        factor, _, _, rss = state
        return factor.logdet + self.n * math.log(max(rss, self._rss_floor))

    def realized_delta(self, z):
        """The nugget (scalar or vector) in effect at a search point."""
        theta, extra = self.split(z)
        return self._delta(self.workspace.corr(theta), extra)

    def value_and_grad(self, z):
        theta, extra = self.split(z)
        r0 = self.workspace.corr(theta)
        delta = self._delta(r0, extra)
        state = self._profile(_add_diag(r0, delta))
        if state is None:
            return np.inf, np.zeros(self.n_search)
        factor, _, alpha, rss = state
        floored = rss <= self._rss_floor
        rss_used = max(rss, self._rss_floor)
        dev = factor.logdet + self.n * math.log(rss_used)

        rinv = spd_inverse(factor)
        resid_weight = 0.0 if floored else self.n / rss_used
        w = rinv - resid_weight * np.outer(alpha, alpha)
        dr = self.workspace.corr_gradient(theta, r0)
        grad_theta = np.einsum("ij,kij->k", w, dr)
        grad = grad_theta * _dtheta_dsearch(theta, self.transform)
        if self.extra == "nugget":
            g = delta * (np.trace(rinv) - resid_weight * float(alpha @ alpha))
            grad = np.append(grad, g)
        elif self.extra == "scale":
            noise = self.nugget.per_point_noise
            g = math.exp(extra) * (
                float(noise @ np.diagonal(rinv)) - resid_weight * float(noise @ (alpha * alpha))
            )
            grad = np.append(grad, g)
        return dev, grad


def _add_diag(r0, delta):
    r = r0.copy()
    idx = np.arange(r.shape[0])
    r[idx, idx] += delta
    return r


def deviance(theta_search, x, y, kernel_family="pexp", *, exponent=2.0,
             nugget: NuggetStrategy | None = None, search_transform="log10") -> float:
    """Profile deviance at one search-space point.

    ``theta_search`` carries one coordinate per input dimension plus,
    when the nugget strategy estimates a scalar nugget or a noise
    scale, a trailing natural-log coordinate for it.
    """
    problem = DevianceProblem(x, y, kernel_family, exponent, nugget, search_transform)
    return problem.value(theta_search)


def deviance_gradient(theta_search, x, y, kernel_family="pexp", *, exponent=2.0,
                      nugget: NuggetStrategy | None = None, search_transform="log10") -> np.ndarray:
    """Analytic gradient of :func:`deviance` in the search coordinates.

    Exact for the fixed, dace, and estimated nugget modes; for the
    stability-bound and unit-scale per-point modes the dependence of
    delta on theta is treated as locally constant.
    """
    problem = DevianceProblem(x, y, kernel_family, exponent, nugget, search_transform)
    return problem.value_and_grad(theta_search)[1]


# ---------------------------------------------------------------------------
# Multistart machinery
# ---------------------------------------------------------------------------

def _kmeans(points: np.ndarray, k: int, rng, max_iter: int = 100) -> np.ndarray:
    """Plain Lloyd k-means; ``points`` must be ordered best-first so an
    emptied cluster can be re-seeded at the best not-yet-used survivor."""
    n = points.shape[0]
    k = min(k, n)
    used = list(rng.choice(n, size=k, replace=False))
    centers = points[used].copy()
    assignment = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = np.argmin(d2, axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for c in range(k):
            members = points[assignment == c]
            if members.shape[0] == 0:
                fresh = next((i for i in range(n) if i not in used), None)
                if fresh is None:
                    continue
                used.append(fresh)
                centers[c] = points[fresh]
            else:
                centers[c] = members.mean(axis=0)
    return centers


def generate_starts(bounds, config: FitConfig, evaluator, seed=None) -> list:
    """Space-filling launch points for the multistart search.

    Samples a Latin hypercube over the bounded search box, keeps the
    best 20% of candidates by objective value, clusters the survivors
    with k-means, and returns the cluster centers plus the single best
    candidate when it is not already among them. Deterministic for a
    given seed.
    """
    bounds = np.asarray(bounds, dtype=float)
    dims = bounds.shape[0]
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n_cand = config.n_lhs_candidates or 40 * dims
    n_clusters = config.n_clusters or config.n_starts
    if n_clusters > n_cand:
        raise ValueError("n_clusters cannot exceed n_lhs_candidates")

    unit = latin_hypercube(n_cand, dims, rng)
    candidates = bounds[:, 0] + unit * (bounds[:, 1] - bounds[:, 0])
    values = np.array([evaluator(c) for c in candidates])
    finite = np.isfinite(values)
    if not np.any(finite):
        return []
    order = np.argsort(values[finite], kind="stable")
    survivors = candidates[finite][order]
    n_keep = max(int(math.ceil(_SURVIVOR_FRACTION * n_cand)), min(n_clusters, len(survivors)))
    survivors = survivors[: min(n_keep, len(survivors))]

    centers = _kmeans(survivors, n_clusters, rng)
    starts = [c for c in centers]
    best = survivors[0]
    if all(not np.allclose(best, c, rtol=0.0, atol=1e-12) for c in starts):
        starts.append(best)
    return starts


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    start_fun: float
    n_iter: int
    grad_norm: float
    reason: str


def _projected_grad_norm(x, g, bounds) -> float:
    g = np.array(g, dtype=float)
    at_lo = (x <= bounds[:, 0]) & (g > 0)
    at_hi = (x >= bounds[:, 1]) & (g < 0)
    g[at_lo | at_hi] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


def minimize(objective, gradient, start, bounds, config: FitConfig) -> MinimizeResult:
    """Bounded quasi-Newton descent from one start point.

    Wraps L-BFGS-B (memory 10). The returned point never exceeds the
    start's objective and always lies inside the bounds. Raises
    ObjectiveNonFiniteError when the start itself evaluates to a
    non-finite value, so the multistart driver can skip it.
    """
    bounds = np.asarray(bounds, dtype=float)
    start = np.asarray(start, dtype=float)
    f0 = float(objective(start))
    if not np.isfinite(f0):
        raise ObjectiveNonFiniteError(f"objective is {f0} at the start point")

    def fun_and_jac(z):
        f = objective(z)
        g = gradient(z)
        if not np.isfinite(f):
            return _BIG_OBJECTIVE, np.zeros_like(z)
        return f, g

    result = scipy.optimize.minimize(
        fun_and_jac,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[tuple(b) for b in bounds],
        options={
            "maxiter": config.max_iters,
            "gtol": config.grad_tol,
            "ftol": config.step_tol,
            "maxcor": 10,
        },
    )
    x = np.clip(result.x, bounds[:, 0], bounds[:, 1])
    fun = float(objective(x))
    reason = result.message if isinstance(result.message, str) else result.message.decode()
    if not np.isfinite(fun) or fun > f0:
        # defensive: never report a point worse than the start
        x, fun, reason = start.copy(), f0, "kept start (no improvement)"
    grad_norm = _projected_grad_norm(x, gradient(x), bounds)
    return MinimizeResult(
        x=x, fun=fun, start_fun=f0, n_iter=int(result.nit), grad_norm=grad_norm, reason=reason
    )


@dataclass(frozen=True)
class MultistartResult:
    theta: np.ndarray
    extra: float | None
    delta: float | np.ndarray
    deviance: float
    search_x: np.ndarray
    starts: tuple
    n_factorization_failures: int

    @property
    def total_iterations(self) -> int:
        return sum(s.n_iter for s in self.starts)


def multistart_fit(x, y, kernel_family="pexp", *, exponent=2.0,
                   config: FitConfig | None = None,
                   extra_starts=None) -> MultistartResult:
    """Run the bounded search from every generated start and keep the best.

    Returns the canonical theta of the lowest-deviance run together
    with the extra coordinate (the estimated log-nugget or log noise
    scale, already exponentiated) and per-start diagnostics. Ties
    resolve to the earliest start, so the result is deterministic for a
    given (data, config, seed).
    """
    config = config or FitConfig()
    problem = DevianceProblem(x, y, kernel_family, exponent, config.nugget,
                              config.search_transform)
    bounds = problem.search_bounds(config)
    starts = generate_starts(bounds, config, problem.value, seed=config.seed)

    if starts and problem.extra is not None:
        base = starts[-1].copy()
        if problem.extra == "nugget":
            base[-1] = np.clip(math.log(config.nugget.value), bounds[-1, 0], bounds[-1, 1])
        else:
            base[-1] = np.clip(0.0, bounds[-1, 0], bounds[-1, 1])
        if all(not np.allclose(base, s, rtol=0.0, atol=1e-12) for s in starts):
            starts.append(base)
    if extra_starts is not None:
        for s in extra_starts:
            s = np.clip(np.asarray(s, dtype=float), bounds[:, 0], bounds[:, 1])
            starts.append(s)

    cache = {}

    def objective(z):
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = problem.value_and_grad(z)
        return cache[key][0]

    def gradient(z):
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = problem.value_and_grad(z)
        return cache[key][1]

    runs = []
    for s in starts:
        try:
            runs.append(minimize(objective, gradient, s, bounds, config))
        except ObjectiveNonFiniteError:
            continue
    if not runs:
        raise AllStartsFailedError("every launch point evaluated to a non-finite deviance")
    best = min(runs, key=lambda r: r.fun)
    assert best.fun <= min(r.fun for r in runs)
    theta, extra = problem.split(best.x)
    extra_value = math.exp(extra) if extra is not None else None
    return MultistartResult(
        theta=theta,
        extra=extra_value,
        delta=problem.realized_delta(best.x),
        deviance=best.fun,
        search_x=best.x,
        starts=tuple(runs),
        n_factorization_failures=problem.n_factorization_failures,
    )
