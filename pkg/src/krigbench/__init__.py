"""Gaussian-process (kriging) modeling with a benchmarking harness.

The library fits constant-mean GP metamodels with power-exponential or
Matern-5/2 correlation, several nugget policies, and a multistart
bounded quasi-Newton likelihood search, then scores prediction accuracy
and error-estimate accuracy against analytic test surfaces and a
queueing simulation.
"""

__version__ = "0.1.0"

from .benchmark import (
    BenchResult,
    FitProfile,
    PROFILES,
    allocate_replicates,
    emrmse,
    pmrmse,
    run_experiment,
    run_sk_mm1,
    xi_pi,
)
from .designs import ScalingRecord, maximin_lhs, scale_outputs
from .estimation import (
    FitConfig,
    default_bounds,
    deviance,
    deviance_gradient,
    generate_starts,
    minimize,
    multistart_fit,
)
from .kernels import (
    KernelSpec,
    correlation,
    correlation_matrix,
    cross_correlation,
    spec_from_theta,
    to_canonical_theta,
)
from .linalg import SpdFactor, cholesky, condition_number, largest_eigenvalue, solve_spd
from .model import (
    GpModel,
    fit,
    load_model,
    mu_hat,
    predict_mean,
    predict_mse,
    save_model,
    sigma2_hat,
)
from .nugget import NuggetStrategy, realize_nugget
from .testbed import (
    Mm1Config,
    TestFunction,
    borehole,
    borehole_4d,
    dette_pepelyshev,
    get_function,
    lm_fit,
    lm_predict,
    mm1_analytic,
    mm1_simulate,
    morris,
    otl_circuit,
)

__all__ = [name for name in dir() if not name.startswith("_")]
