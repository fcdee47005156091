"""Correlation functions and hyperparameter parameterizations.

Two families are provided:

* power-exponential, ``prod_k exp(-theta_k |dx_k|^p)`` with exponent
  ``p`` in [1, 2] (p = 2 is the classic Gaussian correlation), and
* Matern with smoothness 5/2,
  ``g(h) = (1 + sqrt(5) h + (5/3) h^2) exp(-sqrt(5) h)`` with
  ``h^2 = sum_k dx_k^2 / ell_k^2``.

Internally everything is driven by the canonical positive rate vector
``theta``. The alternative conventions common in fitting software are
handled as exact, reversible reparameterizations of theta:

========== ==========================================
theta      rates multiplying |dx|^p directly
log10      beta = log10(theta)
inv        d = 1 / theta (distance-squared denominator)
lensq      ell^2 = 1 / (2 theta) (squared lengthscale)
========== ==========================================

The Matern lengthscales are tied to theta by ``ell = 1/sqrt(2 theta)``
so a single search space drives both families.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("pexp", "matern52")
PARAMETERIZATIONS = ("theta", "log10", "inv", "lensq")

_SQRT5 = np.sqrt(5.0)


class NonPositiveParameterError(ValueError):
    """Raw parameters do not map to strictly positive theta."""


@dataclass(frozen=True)
class KernelSpec:
    """A correlation-function family plus its raw hyperparameters.

    Parameters
    ----------
    family : str
        "pexp" or "matern52".
    params : array_like
        Raw hyperparameters, one per input dimension, interpreted
        according to ``parameterization``.
    parameterization : str
        One of "theta", "log10", "inv", "lensq".
    exponent : float
        Power-exponential exponent in [1, 2]; ignored by matern52.
    """

    family: str
    params: np.ndarray
    parameterization: str = "theta"
    exponent: float = 2.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(
                f"unknown parameterization {self.parameterization!r}; "
                f"choose from {PARAMETERIZATIONS}"
            )
        params = np.atleast_1d(np.asarray(self.params, dtype=float))
        if params.ndim != 1 or params.size < 1:
            raise ValueError("params must be a nonempty 1-D vector")
        if not np.all(np.isfinite(params)):
            raise ValueError("params must be finite")
        object.__setattr__(self, "params", params)
        if self.family == "pexp" and not (1.0 <= self.exponent <= 2.0):
            raise ValueError(f"exponent must lie in [1, 2], got {self.exponent}")

    @property
    def dims(self) -> int:
        return self.params.size


def to_canonical_theta(spec: KernelSpec) -> np.ndarray:
    """Convert a spec's raw parameters to the canonical theta vector."""
    p = spec.params
    conv = spec.parameterization
    if conv == "theta":
        if np.any(p <= 0.0):
            raise NonPositiveParameterError("theta entries must be > 0")
        return p.copy()
    if conv == "log10":
        return 10.0 ** p
    if conv == "inv":
        if np.any(p <= 0.0):
            raise NonPositiveParameterError("inverse-theta entries must be > 0")
        return 1.0 / p
    # lensq: params hold the lengthscales ell, theta = 1 / (2 ell^2)
    if np.any(p <= 0.0):
        raise NonPositiveParameterError("lengthscales must be > 0")
    return 1.0 / (2.0 * p * p)


def theta_to_params(theta, parameterization: str) -> np.ndarray:
    """Inverse of :func:`to_canonical_theta` for a given convention."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0.0):
        raise NonPositiveParameterError("theta entries must be > 0")
    if parameterization == "theta":
        return theta.copy()
    if parameterization == "log10":
        return np.log10(theta)
    if parameterization == "inv":
        return 1.0 / theta
    if parameterization == "lensq":
        return 1.0 / np.sqrt(2.0 * theta)
    raise ValueError(f"unknown parameterization {parameterization!r}")


def spec_from_theta(family, theta, parameterization="theta", exponent=2.0) -> KernelSpec:
    """Build a KernelSpec whose raw params express the given canonical theta."""
    return KernelSpec(
        family=family,
        params=theta_to_params(theta, parameterization),
        parameterization=parameterization,
        exponent=exponent,
    )


def _abs_pow(dx: np.ndarray, p: float) -> np.ndarray:
    """|dx|^p with the dx = 0 branch returning 0 (avoids log(0) for fractional p)."""
    if p == 2.0:
        return dx * dx
    adx = np.abs(dx)
    if p == 1.0:
        return adx
    out = np.zeros_like(adx)
    nz = adx > 0.0
    out[nz] = np.exp(p * np.log(adx[nz]))
    return out


def _matern52_of_h(h: np.ndarray) -> np.ndarray:
    return (1.0 + _SQRT5 * h + (5.0 / 3.0) * h * h) * np.exp(-_SQRT5 * h)


def _pairwise_corr(theta, exponent, family, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Correlation between the rows of a (n, d) and b (m, d); returns (n, m)."""
    diff = a[:, None, :] - b[None, :, :]
    if family == "pexp":
        expo = np.tensordot(_abs_pow(diff, exponent), theta, axes=([2], [0]))
        return np.exp(-expo)
    # matern52: dx^2 / ell^2 = 2 theta dx^2
    h2 = np.tensordot(diff * diff, 2.0 * theta, axes=([2], [0]))
    return _matern52_of_h(np.sqrt(h2))


def correlation(spec: KernelSpec, xi, xj) -> float:
    """Correlation between the outputs at two input points.

    Equals 1 exactly when ``xi == xj`` and decays toward 0 as the
    points separate.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    theta = to_canonical_theta(spec)
    if xi.shape != (spec.dims,) or xj.shape != (spec.dims,):
        raise ValueError(f"points must be {spec.dims}-vectors")
    value = _pairwise_corr(theta, spec.exponent, spec.family, xi[None, :], xj[None, :])
    return float(value[0, 0])


def correlation_matrix(spec: KernelSpec, x) -> np.ndarray:
    """Correlation matrix of a design: symmetric with unit diagonal."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.dims:
        raise ValueError(f"design must have shape (n, {spec.dims})")
    theta = to_canonical_theta(spec)
    r = _pairwise_corr(theta, spec.exponent, spec.family, x, x)
    # symmetrize away roundoff from the two evaluation orders
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return r


def cross_correlation(spec: KernelSpec, x, xstar) -> np.ndarray:
    """Correlations between design rows and prediction point(s).

    ``xstar`` may be a single d-vector (returns an n-vector) or an
    (m, d) array (returns an (n, m) matrix).
    """
    x = np.asarray(x, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    theta = to_canonical_theta(spec)
    single = xstar.ndim == 1
    pts = xstar[None, :] if single else xstar
    if x.ndim != 2 or x.shape[1] != spec.dims or pts.shape[1] != spec.dims:
        raise ValueError(f"inputs must have {spec.dims} columns")
    r = _pairwise_corr(theta, spec.exponent, spec.family, x, pts)
    return r[:, 0] if single else r


class KernelWorkspace:
    """Precomputed pairwise distance pieces for one design matrix.

    Repeated correlation-matrix assembly during likelihood optimization
    dominates fitting cost; caching |dx_k|^p (power-exponential) or
    dx_k^2 (Matern) per dimension leaves only an O(d n^2) contraction
    per theta.
    """

    def __init__(self, x, family: str, exponent: float = 2.0):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ValueError("design must be 2-D")
        self.x = x
        self.n, self.dims = x.shape
        self.family = family
        self.exponent = exponent
        diff = x[:, None, :] - x[None, :, :]
        if family == "pexp":
            self._dist = np.ascontiguousarray(np.moveaxis(_abs_pow(diff, exponent), 2, 0))
        elif family == "matern52":
            self._dist = np.ascontiguousarray(np.moveaxis(diff * diff, 2, 0))
        else:
            raise ValueError(f"unknown kernel family {family!r}")

    def corr(self, theta) -> np.ndarray:
        """Correlation matrix (no nugget) at the given canonical theta."""
        theta = np.asarray(theta, dtype=float)
        if self.family == "pexp":
            r = np.exp(-np.tensordot(theta, self._dist, axes=([0], [0])))
        else:
            h2 = np.tensordot(2.0 * theta, self._dist, axes=([0], [0]))
            r = _matern52_of_h(np.sqrt(h2))
        np.fill_diagonal(r, 1.0)
        return r

    def corr_gradient(self, theta, r0: np.ndarray) -> np.ndarray:
        """Stack of dR/dtheta_k matrices, shape (d, n, n).

        ``r0`` must be the matrix returned by :meth:`corr` for the same
        theta.
        """
        theta = np.asarray(theta, dtype=float)
        if self.family == "pexp":
            return -self._dist * r0[None, :, :]
        h2 = np.tensordot(2.0 * theta, self._dist, axes=([0], [0]))
        h = np.sqrt(h2)
        # dg/d(h^2) = -(5/6) (1 + sqrt5 h) exp(-sqrt5 h); d(h^2)/dtheta_k = 2 dx_k^2
        g = -(5.0 / 3.0) * (1.0 + _SQRT5 * h) * np.exp(-_SQRT5 * h)
        return g[None, :, :] * self._dist
