"""Kernel-based estimation of integrated volatility functionals."""

__version__ = "0.1.0"

from ivfunc.errors import (
    ConfigError,
    DataError,
    DomainError,
    IvfuncError,
    NumericError,
)
from ivfunc.estimators import (
    EstimatorConfig,
    JackknifeConfig,
    a_hat_3,
    estimate,
    jackknife,
    v_corrected,
    v_jr,
    v_jr_corrected,
    v_plugin,
    v_undersmoothed,
)
from ivfunc.functionals import FunctionalSpec, get_functional
from ivfunc.kernels import KernelConstants, KernelSpec, compute_constants, get_kernel
from ivfunc.sde_sim import ExpOUConfig, JumpConfig, SamplePath, TimeGrid, make_grid, simulate_expou
from ivfunc.spotvol import SpotVolSeries, TruncationRule, jr_spot_vol, nw_spot_vol

__all__ = [
    "ConfigError",
    "DataError",
    "DomainError",
    "EstimatorConfig",
    "JackknifeConfig",
    "ExpOUConfig",
    "FunctionalSpec",
    "IvfuncError",
    "JumpConfig",
    "KernelConstants",
    "KernelSpec",
    "NumericError",
    "SamplePath",
    "SpotVolSeries",
    "TimeGrid",
    "TruncationRule",
    "a_hat_3",
    "compute_constants",
    "estimate",
    "get_functional",
    "get_kernel",
    "jackknife",
    "jr_spot_vol",
    "make_grid",
    "nw_spot_vol",
    "simulate_expou",
    "v_corrected",
    "v_jr",
    "v_jr_corrected",
    "v_plugin",
    "v_undersmoothed",
]
