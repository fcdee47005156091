"""Nugget strategies: how the diagonal of the correlation matrix is inflated.

The nugget delta turns the correlation matrix R into R + delta*I (or
R + diag(delta) for per-point noise), which both models observation
noise and stabilizes the factorization. Four scalar policies are
supported, plus a per-point vector mode for heteroscedastic
(stochastic-kriging) data:

fixed      a constant delta >= 0 chosen by the user
estimated  delta is an extra likelihood parameter (searched in log space)
dlb        smallest delta keeping the factorization stable, from the
           largest eigenvalue and condition number of R with exponent
           parameter a = 25
dace       the small constant 2.22e-16 * (10 + n)

Per-point noise passes a vector of noise variances for the fitted
observations; the realized diagonal is scale * noise, with the scale
either estimated jointly with the correlation parameters (default) or
tied to the profile variance estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import condition_number, largest_eigenvalue

MODES = ("fixed", "estimated", "dlb", "dace")

STABILITY_EXPONENT = 25.0
DACE_COEFFICIENT = 2.22e-16


@dataclass(frozen=True)
class NuggetStrategy:
    """Configuration for how the nugget is chosen during fitting.

    Use the classmethod constructors rather than building instances
    directly; they enforce the mode-specific constraints.
    """

    mode: str
    value: float = 0.0
    per_point_noise: np.ndarray | None = None
    estimate_scale: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown nugget mode {self.mode!r}; choose from {MODES}")
        if self.mode == "fixed" and self.value < 0.0:
            raise ValueError("fixed nugget must be >= 0")
        if self.mode == "estimated" and self.per_point_noise is None and self.value <= 0.0:
            raise ValueError("estimated nugget needs a starting value > 0")
        if self.per_point_noise is not None:
            noise = np.asarray(self.per_point_noise, dtype=float)
            if noise.ndim != 1 or np.any(noise < 0.0) or not np.all(np.isfinite(noise)):
                raise ValueError("per-point noise must be a 1-D vector of variances >= 0")
            if self.mode != "estimated":
                raise ValueError("per-point noise combines only with the estimated-scale mode")
            object.__setattr__(self, "per_point_noise", noise)

    @classmethod
    def fixed(cls, delta: float) -> "NuggetStrategy":
        return cls(mode="fixed", value=float(delta))

    @classmethod
    def estimated(cls, start: float = 1e-6) -> "NuggetStrategy":
        return cls(mode="estimated", value=float(start))

    @classmethod
    def stability_lower_bound(cls) -> "NuggetStrategy":
        return cls(mode="dlb")

    @classmethod
    def dace_default(cls) -> "NuggetStrategy":
        return cls(mode="dace")

    @classmethod
    def per_point(cls, noise_var, estimate_scale: bool = True) -> "NuggetStrategy":
        """Heteroscedastic mode: ``noise_var`` holds the variance of each
        fitted observation (for replicate averages, sample variance over
        replicate count)."""
        return cls(
            mode="estimated",
            value=1e-6,
            per_point_noise=np.asarray(noise_var, dtype=float),
            estimate_scale=estimate_scale,
        )

    @property
    def is_per_point(self) -> bool:
        return self.per_point_noise is not None


def stability_lower_bound(r, a: float = STABILITY_EXPONENT) -> float:
    """Smallest nugget that keeps factoring the given correlation matrix stable.

    ``max(lam_max (kappa - e^a) / (kappa (e^a - 1)), 0)`` where lam_max
    is the largest eigenvalue and kappa the condition number of ``r``.
    A singular matrix (kappa = inf) gives the limiting value
    ``lam_max / (e^a - 1)``.
    """
    lam = largest_eigenvalue(r)
    kappa = condition_number(r)
    ea = np.exp(a)
    if not np.isfinite(kappa):
        return lam / (ea - 1.0)
    return max(lam * (kappa - ea) / (kappa * (ea - 1.0)), 0.0)


def dace_default_nugget(n: int) -> float:
    """The fixed stabilization constant 2.22e-16 * (10 + n)."""
    return DACE_COEFFICIENT * (10.0 + n)


def realize_nugget(strategy: NuggetStrategy, r, n: int, current: float | None = None):
    """Resolve the strategy to a concrete delta for the given correlation matrix.

    Returns a scalar for the scalar modes or an n-vector for per-point
    noise. ``current`` carries the optimizer's iterate for the
    estimated modes: the scalar delta itself, or the multiplicative
    scale applied to the per-point noise vector.
    """
    if strategy.is_per_point:
        noise = strategy.per_point_noise
        if noise.shape[0] != n:
            raise ValueError(f"per-point noise has length {noise.shape[0]}, expected {n}")
        scale = 1.0 if current is None else float(current)
        return scale * noise
    if strategy.mode == "fixed":
        return strategy.value
    if strategy.mode == "dace":
        return dace_default_nugget(n)
    if strategy.mode == "dlb":
        return stability_lower_bound(r)
    # estimated scalar: the optimizer owns the value
    return strategy.value if current is None else float(current)
