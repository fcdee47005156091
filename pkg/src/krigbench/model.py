"""Fitted Gaussian-process models and their predictive equations.

A fitted model stores the correlation hyperparameters, the constant
mean and process variance estimates, the realized nugget, and the
Cholesky factor of the nugget-inflated correlation matrix. The
predictive mean at a point is

    mu + r' R_delta^{-1} (y - mu 1)

and the associated mean squared error is

    sigma2 [1 - r' R_delta^{-1} r + (1 - 1' R_delta^{-1} r)^2 / (1' R_delta^{-1} 1)]

with every inverse realized through triangular solves. Outputs are
standardized internally (mean 0, range 1); predictions are returned in
the original units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import estimation
from .designs import ScalingRecord, scale_outputs
from .kernels import (
    KernelSpec,
    correlation_matrix,
    cross_correlation,
    spec_from_theta,
    to_canonical_theta,
)
from .linalg import NotPositiveDefiniteError, SpdFactor, cholesky, solve_spd
from .nugget import NuggetStrategy, realize_nugget  # re-exported surface

MODEL_FORMAT = "krigbench-gp-model"
MODEL_VERSION = 1

# jitter escalation on factorization failure: start, multiplier, cap
_JITTER_START = 1e-12
_JITTER_CAP = 1e-4

# pre-clamp MSE values below -tol*sigma2 count as numerical warnings
_MSE_WARN_TOL = 1e-8


class FactorizationFailureError(Exception):
    """Cholesky kept failing after the jitter escalation ladder."""


def mu_hat(factor: SpdFactor, y) -> float:
    """Generalized least-squares estimate of the constant mean,
    (1' R^{-1} 1)^{-1} (1' R^{-1} y)."""
    y = np.asarray(y, dtype=float)
    ones = np.ones(factor.n)
    sols = solve_spd(factor, np.column_stack([ones, y]))
    return float(ones @ sols[:, 1]) / float(ones @ sols[:, 0])


def sigma2_hat(factor: SpdFactor, y, mu: float) -> float:
    """Profile variance estimate (1/n) (y - mu 1)' R^{-1} (y - mu 1)."""
    y = np.asarray(y, dtype=float)
    res = y - mu
    return max(float(res @ solve_spd(factor, res)) / factor.n, 0.0)


@dataclass
class FitDiagnostics:
    deviance: float = np.nan
    n_starts: int = 0
    total_iterations: int = 0
    n_factorization_failures: int = 0
    jitter: float = 0.0
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "deviance": self.deviance,
            "n_starts": self.n_starts,
            "total_iterations": self.total_iterations,
            "n_factorization_failures": self.n_factorization_failures,
            "jitter": self.jitter,
            "degenerate": self.degenerate,
        }


@dataclass
class GpModel:
    """Fitted state. Treat as immutable; predictions are read-only.

    ``y_scaled`` and the cached solves live in standardized output
    units; ``scaling`` maps them back. ``delta`` is the realized
    nugget, a scalar or a per-point vector. ``warning_counts`` is a
    diagnostic tally (approximate under concurrent prediction).
    """

    kernel: KernelSpec
    mu_hat: float
    sigma2_hat: float
    delta: float | np.ndarray
    chol: SpdFactor
    x_design: np.ndarray
    y_scaled: np.ndarray
    alpha: np.ndarray
    scaling: ScalingRecord
    ones_solve: np.ndarray
    one_rinv_one: float
    degenerate: bool = False
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)
    warning_counts: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x_design.shape[0]

    @property
    def dims(self) -> int:
        return self.x_design.shape[1]


def predict_mean(model: GpModel, x):
    """Predictive mean at one point or a batch, in original output units."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if model.degenerate:
        values = np.zeros(1 if single else x.shape[0])
        out = model.scaling.invert(values)
        return float(out[0]) if single else out
    r = cross_correlation(model.kernel, model.x_design, x)
    mean_scaled = model.mu_hat + r.T @ model.alpha
    out = model.scaling.invert(np.atleast_1d(mean_scaled))
    return float(out[0]) if single else out


def predict_mse(model: GpModel, x):
    """Predictive mean squared error, clamped at zero, in original units^2.

    Pre-clamp values more negative than round-off scale are tallied in
    ``model.warning_counts['mse_clamp']`` rather than raised.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if model.degenerate:
        values = np.zeros(1 if single else x.shape[0])
        return float(values[0]) if single else values
    r = cross_correlation(model.kernel, model.x_design, x)
    r2 = r if r.ndim == 2 else r[:, None]
    b = scipy.linalg.solve_triangular(model.chol.lower, r2, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", b, b)
    tail = 1.0 - model.ones_solve @ r2
    mse = model.sigma2_hat * (1.0 - quad + tail * tail / model.one_rinv_one)
    severe = np.sum(mse < -_MSE_WARN_TOL * model.sigma2_hat)
    if severe:
        model.warning_counts["mse_clamp"] = model.warning_counts.get("mse_clamp", 0) + int(severe)
    mse = np.maximum(mse, 0.0)
    out = model.scaling.invert_variance(mse)
    return float(out[0]) if single else out


def _factor_with_ladder(r0: np.ndarray, delta, diagnostics: FitDiagnostics):
    """Cholesky of R + diag(delta), escalating scalar jitter on failure."""
    n = r0.shape[0]
    idx = np.arange(n)

    def attempt(d):
        r = r0.copy()
        r[idx, idx] += d
        return cholesky(r)

    try:
        return attempt(delta), delta
    except NotPositiveDefiniteError:
        diagnostics.n_factorization_failures += 1
    jitter = _JITTER_START
    while jitter <= _JITTER_CAP:
        eff = np.maximum(delta, jitter) if np.isscalar(delta) else delta + jitter
        try:
            factor = attempt(eff)
            diagnostics.jitter = jitter
            return factor, eff
        except NotPositiveDefiniteError:
            diagnostics.n_factorization_failures += 1
            jitter *= 10.0
    raise FactorizationFailureError(
        f"correlation matrix not factorizable even with jitter {_JITTER_CAP:g}"
    )


def fit(x, y, kernel_family: str = "pexp", config: estimation.FitConfig | None = None, *,
        exponent: float = 2.0, parameterization: str = "theta",
        initial_params=None) -> GpModel:
    """Fit a GP by multistart deviance minimization.

    Parameters
    ----------
    x : (n, d) array_like
        Design points, expected in the unit cube.
    y : (n,) array_like
        Outputs in their natural units; standardized internally.
    kernel_family, exponent
        Correlation family ("pexp" or "matern52") and the
        power-exponential exponent.
    config : FitConfig
        Optimizer budget, search transform, nugget strategy, seed.
    parameterization : str
        Convention in which the returned model's kernel parameters are
        expressed (and in which ``initial_params`` is interpreted).
    initial_params : array_like, optional
        Extra optimizer start, given in ``parameterization``.

    Constant outputs yield a degenerate mean-only model rather than an
    error. Persistent factorization failure raises
    FactorizationFailureError after the jitter ladder is exhausted.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("x must be (n, d) with y its n-vector of outputs")
    if x.shape[0] < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    config = config or estimation.FitConfig()

    y_scaled, record = scale_outputs(y)
    n, d = x.shape
    if record.degenerate:
        return _degenerate_model(x, y_scaled, record, kernel_family, exponent, parameterization)

    strategy = config.nugget
    if strategy.is_per_point:
        strategy = NuggetStrategy.per_point(
            record.apply_variance(strategy.per_point_noise),
            estimate_scale=strategy.estimate_scale,
        )
        config = config.with_nugget(strategy)

    extra_starts = None
    if initial_params is not None:
        spec0 = KernelSpec(kernel_family, np.asarray(initial_params, dtype=float),
                           parameterization, exponent)
        template = estimation.DevianceProblem(x, y_scaled, kernel_family, exponent,
                                              strategy, config.search_transform)
        start = estimation.to_search(to_canonical_theta(spec0), config.search_transform)
        if template.extra == "nugget":
            start = np.append(start, np.log(strategy.value))
        elif template.extra == "scale":
            start = np.append(start, 0.0)
        extra_starts = [start]

    result = estimation.multistart_fit(
        x, y_scaled, kernel_family, exponent=exponent, config=config,
        extra_starts=extra_starts,
    )

    spec = spec_from_theta(kernel_family, result.theta, parameterization, exponent)
    diagnostics = FitDiagnostics(
        deviance=result.deviance,
        n_starts=len(result.starts),
        total_iterations=result.total_iterations,
        n_factorization_failures=result.n_factorization_failures,
    )
    return _assemble(x, y_scaled, record, spec, result.delta, diagnostics)


def _assemble(x, y_scaled, record, spec, delta, diagnostics) -> GpModel:
    r0 = correlation_matrix(spec, x)
    factor, delta = _factor_with_ladder(r0, delta, diagnostics)
    n = x.shape[0]
    ones = np.ones(n)
    sols = solve_spd(factor, np.column_stack([ones, y_scaled]))
    u = sols[:, 0]
    one_rinv_one = float(ones @ u)
    mu = float(ones @ sols[:, 1]) / one_rinv_one
    alpha = sols[:, 1] - mu * u
    sigma2 = max(float((y_scaled - mu) @ alpha) / n, 0.0)
    return GpModel(
        kernel=spec,
        mu_hat=mu,
        sigma2_hat=sigma2,
        delta=delta,
        chol=factor,
        x_design=x,
        y_scaled=y_scaled,
        alpha=alpha,
        scaling=record,
        ones_solve=u,
        one_rinv_one=one_rinv_one,
        diagnostics=diagnostics,
    )


def model_from_parameters(x, y, spec: KernelSpec, delta=0.0) -> GpModel:
    """Assemble a model at known hyperparameters (no optimization).

    ``delta`` may be a scalar nugget or a per-point vector; outputs are
    standardized exactly as in :func:`fit`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("x must be (n, d) with y its n-vector of outputs")
    y_scaled, record = scale_outputs(y)
    if record.degenerate:
        return _degenerate_model(x, y_scaled, record, spec.family, spec.exponent,
                                 spec.parameterization)
    return _assemble(x, y_scaled, record, spec, delta, FitDiagnostics())


def _degenerate_model(x, y_scaled, record, family, exponent, parameterization) -> GpModel:
    n = x.shape[0]
    spec = spec_from_theta(family, np.ones(x.shape[1]), parameterization, exponent)
    factor = SpdFactor(lower=np.eye(n), logdet=0.0)
    return GpModel(
        kernel=spec,
        mu_hat=0.0,
        sigma2_hat=0.0,
        delta=0.0,
        chol=factor,
        x_design=x,
        y_scaled=y_scaled,
        alpha=np.zeros(n),
        scaling=record,
        ones_solve=np.ones(n),
        one_rinv_one=float(n),
        degenerate=True,
        diagnostics=FitDiagnostics(degenerate=True),
    )


# ---------------------------------------------------------------------------
# Serialization: versioned, self-describing, exact round trip
# ---------------------------------------------------------------------------

def save_model(model: GpModel, path) -> None:
    """Write a model to a self-describing JSON file.

    Floats are serialized with full round-trip precision, so a loaded
    model predicts bit-identically. Field names are part of the format
    contract (see README).
    """
    delta = model.delta
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel_family": model.kernel.family,
        "exponent": model.kernel.exponent,
        "parameterization": model.kernel.parameterization,
        "params": model.kernel.params.tolist(),
        "mu_hat": model.mu_hat,
        "sigma2_hat": model.sigma2_hat,
        "delta": delta.tolist() if isinstance(delta, np.ndarray) else float(delta),
        "chol_lower": model.chol.lower.tolist(),
        "chol_logdet": model.chol.logdet,
        "x_design": model.x_design.tolist(),
        "y_scaled": model.y_scaled.tolist(),
        "alpha": model.alpha.tolist(),
        "ones_solve": model.ones_solve.tolist(),
        "one_rinv_one": model.one_rinv_one,
        "y_mean": model.scaling.y_mean,
        "y_range": model.scaling.y_range,
        "scaling_degenerate": model.scaling.degenerate,
        "degenerate": model.degenerate,
        "diagnostics": model.diagnostics.as_dict(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def load_model(path) -> GpModel:
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {payload.get('version')}")
    spec = KernelSpec(
        family=payload["kernel_family"],
        params=np.array(payload["params"], dtype=float),
        parameterization=payload["parameterization"],
        exponent=payload["exponent"],
    )
    lower = np.array(payload["chol_lower"], dtype=float)
    factor = SpdFactor(lower=lower, logdet=float(payload["chol_logdet"]))
    delta = payload["delta"]
    delta = np.array(delta, dtype=float) if isinstance(delta, list) else float(delta)
    u = np.array(payload["ones_solve"], dtype=float)
    diag = payload.get("diagnostics", {})
    return GpModel(
        kernel=spec,
        mu_hat=float(payload["mu_hat"]),
        sigma2_hat=float(payload["sigma2_hat"]),
        delta=delta,
        chol=factor,
        x_design=np.array(payload["x_design"], dtype=float),
        y_scaled=np.array(payload["y_scaled"], dtype=float),
        alpha=np.array(payload["alpha"], dtype=float),
        scaling=ScalingRecord(
            y_mean=float(payload["y_mean"]),
            y_range=float(payload["y_range"]),
            degenerate=bool(payload.get("scaling_degenerate", False)),
        ),
        ones_solve=u,
        one_rinv_one=float(payload["one_rinv_one"]),
        degenerate=bool(payload.get("degenerate", False)),
        diagnostics=FitDiagnostics(**diag) if diag else FitDiagnostics(),
    )
