"""Macroreplicated accuracy benchmarks for fitting configurations.

Each experiment draws fresh maximin LHS design and prediction sets,
standardizes the outputs (mean 0, range 1), fits a least-squares
hyperplane plus every requested GP profile on identical data, and
scores two quantities per fit on the prediction set:

* EMRMSE, the root mean squared prediction error against the truth, and
* PMRMSE, the root mean of the model's own error estimates.

Both are normalized by the hyperplane's EMRMSE, giving the accuracy
ratio xi (below 1 means the GP beats the hyperplane) and the
self-assessment ratio pi (pi below xi means the model underestimates
its error). Metrics are computed in the standardized units, so they
are directly comparable across surfaces.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import model as gp
from .designs import maximin_lhs, scale_outputs
from .estimation import FitConfig
from .nugget import NuggetStrategy
from .testbed import Mm1Config, get_function, lm_fit, lm_predict, mm1_analytic, mm1_simulate

RESULTS_HEADER = (
    "function,d,n,profile,macrorep,seed,emrmse_gp,emrmse_lm,pmrmse_gp,"
    "xi,pi,fit_seconds,predict_seconds,warnings"
)
PLOT_HEADER = "function,d,n,profile,macrorep,metric,value"

MM1_DESIGN_POINTS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

DESIGN_SWAPS = 10_000
PREDICTION_SWAPS = 1_000


class ZeroBaselineError(ValueError):
    """The hyperplane fit the surface exactly; the ratios are undefined."""


class NegativeVarianceError(ValueError):
    """An error estimate was negative; the prediction pipeline is broken."""


def emrmse(predictions, truths) -> float:
    """Root mean squared prediction error."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape or predictions.ndim != 1 or predictions.size < 1:
        raise ValueError("predictions and truths must be equal-length nonempty vectors")
    return float(np.sqrt(np.mean((predictions - truths) ** 2)))


def pmrmse(mse_values) -> float:
    """Root mean of the model's own error estimates."""
    mse_values = np.asarray(mse_values, dtype=float)
    if mse_values.ndim != 1 or mse_values.size < 1:
        raise ValueError("mse values must be a nonempty vector")
    if np.any(mse_values < 0.0):
        raise NegativeVarianceError("negative predictive MSE reached the metrics stage")
    return float(np.sqrt(np.mean(mse_values)))


def xi_pi(emrmse_gp: float, pmrmse_gp: float, emrmse_lm: float):
    """Normalize both error measures by the hyperplane's EMRMSE."""
    if emrmse_lm <= 0.0:
        raise ZeroBaselineError("the linear baseline has zero error; ratios are undefined")
    return emrmse_gp / emrmse_lm, pmrmse_gp / emrmse_lm


@dataclass(frozen=True)
class FitProfile:
    """A named fitting configuration: kernel family crossed with a
    nugget policy and an optimizer budget."""

    label: str
    family: str = "pexp"
    exponent: float = 2.0
    parameterization: str = "theta"
    nugget_mode: str = "estimated"   # fixed | estimated | dlb | dace | per-point
    nugget_value: float = 1e-6
    estimate_scale: bool = True      # per-point mode only
    n_starts: int = 5
    max_iters: int = 200

    def strategy(self, noise_var=None) -> NuggetStrategy:
        if self.nugget_mode == "per-point":
            if noise_var is None:
                raise ValueError(f"profile {self.label!r} needs per-point noise variances")
            return NuggetStrategy.per_point(noise_var, estimate_scale=self.estimate_scale)
        if self.nugget_mode == "fixed":
            return NuggetStrategy.fixed(self.nugget_value)
        if self.nugget_mode == "estimated":
            return NuggetStrategy.estimated(self.nugget_value)
        if self.nugget_mode == "dlb":
            return NuggetStrategy.stability_lower_bound()
        if self.nugget_mode == "dace":
            return NuggetStrategy.dace_default()
        raise ValueError(f"unknown nugget mode {self.nugget_mode!r}")

    @property
    def needs_noise(self) -> bool:
        return self.nugget_mode == "per-point"


PROFILES = {
    p.label: p
    for p in (
        FitProfile("gauss-nugE", nugget_mode="estimated", nugget_value=1e-6),
        FitProfile("gauss-dlb", nugget_mode="dlb"),
        FitProfile("pexp195-dlb", exponent=1.95, nugget_mode="dlb"),
        FitProfile("gauss-dace", nugget_mode="dace"),
        FitProfile("gauss-nug6", nugget_mode="fixed", nugget_value=1e-6),
        FitProfile("gauss-nug0", nugget_mode="fixed", nugget_value=0.0),
        FitProfile("matern52-nugE", family="matern52", nugget_mode="estimated"),
        FitProfile("sk-gauss", nugget_mode="per-point"),
        FitProfile("sk-matern52", family="matern52", nugget_mode="per-point"),
    )
}

DEFAULT_PROFILE_LABELS = (
    "gauss-nugE", "gauss-dlb", "pexp195-dlb", "gauss-dace", "gauss-nug6", "matern52-nugE",
)
SK_PROFILE_LABELS = ("sk-gauss", "sk-matern52")


def resolve_profiles(labels) -> list:
    out = []
    for label in labels:
        if isinstance(label, FitProfile):
            out.append(label)
            continue
        if label not in PROFILES:
            valid = ", ".join(sorted(PROFILES))
            raise KeyError(f"unknown profile {label!r}; valid names: {valid}")
        out.append(PROFILES[label])
    if len({p.label for p in out}) != len(out):
        raise ValueError("profile labels must be unique within a run")
    return out


@dataclass(frozen=True)
class BenchResult:
    """One (macroreplicate, profile) cell of an experiment."""

    function: str
    d: int
    n: int
    profile: str
    macrorep: int
    seed: int
    emrmse_gp: float
    emrmse_lm: float
    pmrmse_gp: float
    xi: float
    pi: float
    fit_seconds: float
    predict_seconds: float
    warnings: int

    def row(self) -> str:
        cols = [
            self.function, str(self.d), str(self.n), self.profile,
            str(self.macrorep), str(self.seed),
            _fmt(self.emrmse_gp), _fmt(self.emrmse_lm), _fmt(self.pmrmse_gp),
            _fmt(self.xi), _fmt(self.pi),
            _fmt(self.fit_seconds), _fmt(self.predict_seconds), str(self.warnings),
        ]
        return ",".join(cols)


def _fmt(value: float) -> str:
    return repr(float(value))


def _derive_seed(base_seed: int, *key) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=key).generate_state(1)[0])


def _input_digest(*arrays) -> str:
    digest = hashlib.sha256()
    for a in arrays:
        digest.update(np.ascontiguousarray(a).tobytes())
    return digest.hexdigest()


def _fit_cell(fn_name, d, n, profile, macrorep, macro_seed, x, ys, xp, yts,
              emrmse_lm_value, fit_seed, digest, noise_var=None) -> BenchResult:
    # every profile must see bit-identical standardized data
    assert _input_digest(x, ys, xp, yts) == digest
    config = FitConfig(
        nugget=profile.strategy(noise_var),
        n_starts=profile.n_starts,
        max_iters=profile.max_iters,
        seed=fit_seed,
    )
    t0 = time.perf_counter()
    try:
        fitted = gp.fit(x, ys, profile.family, config,
                        exponent=profile.exponent,
                        parameterization=profile.parameterization)
    except Exception:
        elapsed = time.perf_counter() - t0
        return BenchResult(fn_name, d, n, profile.label, macrorep, macro_seed,
                           np.nan, emrmse_lm_value, np.nan, np.nan, np.nan,
                           elapsed, 0.0, warnings=1)
    fit_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    preds = gp.predict_mean(fitted, xp)
    mses = gp.predict_mse(fitted, xp)
    predict_seconds = time.perf_counter() - t1

    emrmse_gp = emrmse(preds, yts)
    pmrmse_gp = pmrmse(mses)
    xi, pi = xi_pi(emrmse_gp, pmrmse_gp, emrmse_lm_value)
    n_warn = (fitted.diagnostics.n_factorization_failures
              + sum(fitted.warning_counts.values()))
    return BenchResult(fn_name, d, n, profile.label, macrorep, macro_seed,
                       emrmse_gp, emrmse_lm_value, pmrmse_gp, xi, pi,
                       fit_seconds, predict_seconds, int(n_warn))


def run_experiment(function, n: int, m: int = 2000, profiles=DEFAULT_PROFILE_LABELS,
                   n_macroreps: int = 5, base_seed: int = 0, jobs: int = 1,
                   design_swaps: int = DESIGN_SWAPS,
                   prediction_swaps: int = PREDICTION_SWAPS) -> list:
    """Run one benchmark: a test function at design size ``n``.

    Every macroreplicate generates its own maximin LHS design and
    prediction set from seeds derived from ``base_seed``, evaluates the
    truth, standardizes, and fits the hyperplane baseline plus every
    profile on identical data. Failures of individual profiles are
    recorded in their row (NaN metrics, warning flag) without aborting
    the rest. Rows come back sorted by (function, n, profile,
    macroreplicate) regardless of ``jobs``.
    """
    fn = get_function(function) if isinstance(function, str) else function
    profiles = resolve_profiles(profiles)
    jobs = max(1, int(jobs))

    tasks = []
    for rep in range(n_macroreps):
        macro_seed = _derive_seed(base_seed, rep)
        x = maximin_lhs(n, fn.dims, _derive_seed(base_seed, rep, 0), iters=design_swaps)
        xp = maximin_lhs(m, fn.dims, _derive_seed(base_seed, rep, 1), iters=prediction_swaps)
        y = fn(x)
        yt = fn(xp)
        ys, record = scale_outputs(y)
        yts = record.apply(yt)
        digest = _input_digest(x, ys, xp, yts)
        baseline = lm_fit(x, ys)
        emrmse_lm_value = emrmse(lm_predict(baseline, xp), yts)
        for idx, profile in enumerate(profiles):
            fit_seed = _derive_seed(base_seed, rep, 2 + idx)
            tasks.append((fn.name, fn.dims, n, profile, rep, macro_seed,
                          x, ys, xp, yts, emrmse_lm_value, fit_seed, digest))

    if jobs == 1:
        results = [_fit_cell(*task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: _fit_cell(*t), tasks))
    results.sort(key=lambda r: (r.function, r.n, r.profile, r.macrorep))
    return results


# ---------------------------------------------------------------------------
# Two-stage stochastic kriging on the M/M/1 queue
# ---------------------------------------------------------------------------

def allocate_replicates(weights, total: int, min_each: int = 1) -> np.ndarray:
    """Split ``total`` replicates proportionally to ``weights``.

    Largest-remainder rounding with a floor of ``min_each`` per point;
    the counts always sum exactly to ``total``. Zero weights fall back
    to an equal split of the remainder.
    """
    weights = np.asarray(weights, dtype=float)
    k = weights.size
    if np.any(weights < 0.0):
        raise ValueError("weights must be nonnegative")
    if total < k * min_each:
        raise ValueError(f"total {total} cannot cover {min_each} per point for {k} points")
    remaining = total - k * min_each
    wsum = float(weights.sum())
    quotas = np.full(k, remaining / k) if wsum == 0.0 else remaining * weights / wsum
    counts = np.floor(quotas).astype(int)
    short = remaining - int(counts.sum())
    if short:
        fractions = quotas - np.floor(quotas)
        for idx in np.argsort(-fractions, kind="stable")[:short]:
            counts[idx] += 1
    return counts + min_each


def run_sk_mm1(n1: int = 5, n2: int = 100, profiles=SK_PROFILE_LABELS, seed: int = 0,
               run_length: int = 2000, n_grid: int = 201):
    """Two-stage heteroscedastic-noise experiment on the M/M/1 queue.

    Stage 1 runs ``n1`` replicates at each of the seven design arrival
    rates; stage 2 distributes ``n2`` further replicates proportionally
    to the square root of the stage-1 sample variances. The GP is fit
    to the pooled per-point averages with per-point noise variances
    (pooled sample variance over replicate count), and scored against
    the analytic mean curve on a dense grid. Returns ``(results,
    allocation)``.
    """
    if n2 < len(MM1_DESIGN_POINTS):
        raise ValueError(f"n2 must be at least {len(MM1_DESIGN_POINTS)} (one replicate per point)")
    profiles = resolve_profiles(profiles)
    for profile in profiles:
        if not profile.needs_noise:
            raise ValueError(f"profile {profile.label!r} is not stochastic-kriging capable")

    rates = np.array(MM1_DESIGN_POINTS)
    k = rates.size

    def simulate(stage, point, rep):
        cfg = Mm1Config(arrival_rate=float(rates[point]), n_customers=run_length,
                        seed=_derive_seed(seed, stage, point, rep))
        return mm1_simulate(cfg)

    stage1 = [[simulate(1, i, r) for r in range(n1)] for i in range(k)]
    s1_std = np.array([np.std(obs, ddof=1) for obs in stage1])
    allocation = allocate_replicates(s1_std, n2, min_each=1)

    pooled = []
    for i in range(k):
        extra = [simulate(2, i, r) for r in range(int(allocation[i]))]
        pooled.append(np.array(stage1[i] + extra))
    means = np.array([obs.mean() for obs in pooled])
    noise_var = np.array([obs.var(ddof=1) / obs.size for obs in pooled])

    x = rates.reshape(-1, 1)
    grid = np.linspace(rates[0], rates[-1], n_grid).reshape(-1, 1)
    truth = np.array([mm1_analytic(float(g))[0] for g in grid[:, 0]])

    ys, record = scale_outputs(means)
    truth_s = record.apply(truth)
    noise_s = record.apply_variance(noise_var)
    digest = _input_digest(x, ys, grid, truth_s)

    baseline = lm_fit(x, ys)
    emrmse_lm_value = emrmse(lm_predict(baseline, grid), truth_s)

    results = []
    for idx, profile in enumerate(profiles):
        fit_seed = _derive_seed(seed, 3, idx)
        results.append(
            _fit_cell("mm1", 1, k, profile, 0, seed, x, ys, grid, truth_s,
                      emrmse_lm_value, fit_seed, digest, noise_var=noise_s)
        )
    results.sort(key=lambda r: (r.function, r.n, r.profile, r.macrorep))
    return results, allocation


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_results_csv(results, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(RESULTS_HEADER + "\n")
        for r in results:
            handle.write(r.row() + "\n")


def write_plot_data_csv(results, path) -> None:
    """Long-format export for strip charts: one row per (cell, metric)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(PLOT_HEADER + "\n")
        for r in results:
            for metric, value in (("xi", r.xi), ("pi", r.pi)):
                handle.write(
                    f"{r.function},{r.d},{r.n},{r.profile},{r.macrorep},{metric},{_fmt(value)}\n"
                )


def underestimation_fraction(results) -> dict:
    """Fraction of rows with pi < xi, keyed by (function, n)."""
    groups: dict = {}
    for r in results:
        key = (r.function, r.n)
        total, below = groups.get(key, (0, 0))
        if np.isfinite(r.xi) and np.isfinite(r.pi):
            groups[key] = (total + 1, below + (1 if r.pi < r.xi else 0))
    return {key: below / total for key, (total, below) in groups.items() if total}
