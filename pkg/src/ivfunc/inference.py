"""Central-limit machinery: bias terms from the latent truth, asymptotic variance,
standardized errors, confidence intervals and normality diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ivfunc.errors import ConfigError, DataError
from ivfunc.functionals import FunctionalSpec, get_functional, h_transform, variance_integrand
from ivfunc.kernels import KernelConstants
from ivfunc.sde_sim import PathTruth
from ivfunc.spotvol import SpotVolSeries


@dataclass(frozen=True)
class BiasOracle:
    """Asymptotic bias ``A1 + A2 + A3`` of the plug-in estimator, scaled by ``1/sqrt(delta)``."""

    a1: float
    a2: float
    a3: float
    theta: float
    constants: KernelConstants

    @property
    def total(self) -> float:
        return self.a1 + self.a2 + self.a3


def _truth_arrays(truth) -> tuple[np.ndarray, np.ndarray]:
    if truth is None:
        raise DataError("truth channels are not available for this path")
    if isinstance(truth, PathTruth):
        c, vv = truth.c_path, truth.volvol_path
    else:
        c, vv = truth
    if c is None or vv is None:
        raise DataError("truth channels are not available for this path")
    return np.asarray(c, dtype=float), np.asarray(vv, dtype=float)


def _riemann(values: np.ndarray, delta: float) -> float:
    return delta * math.fsum(np.ravel(values))


def bias_oracle(
    truth: PathTruth | tuple,
    kernel_consts: KernelConstants,
    theta: float,
    g: FunctionalSpec | str,
    delta: float,
) -> BiasOracle:
    """Bias terms from the true spot variance ``c`` and its diffusion coefficient.

    ``A1 = -theta int_0^inf L g(c_0) + theta int_-inf^0 L g(c_T)``,
    ``A2 = (1 / (2 theta)) int h(c) ds int K^2``,
    ``A3 = (theta / 2) int g''(c) c~ ds [int L^2 + int_-inf^0 L - int_0^inf L]``
    with ``c~`` the squared diffusion coefficient of ``c``. Integrals are
    left-endpoint Riemann sums on the truth grid.
    """
    g = get_functional(g)
    if not theta > 0:
        raise ConfigError(f"theta must be positive, got {theta}")
    c, vol = _truth_arrays(truth)
    kc = kernel_consts
    left = c[:-1]
    ct = vol[:-1] ** 2
    gv0, gvT = np.asarray(g.g(c[[0, -1]]), dtype=float)
    a1 = -theta * kc.int_L_pos * gv0 + theta * kc.int_L_neg * gvT
    a2 = _riemann(h_transform(g, left), delta) * kc.int_K2 / (2.0 * theta)
    a3 = theta / 2.0 * _riemann(np.asarray(g.hess(left)) * ct, delta) * kc.volvol_numerator
    return BiasOracle(float(a1), float(a2), float(a3), float(theta), kc)


def a_hat_3_limit(
    truth: PathTruth | tuple,
    kernel_consts: KernelConstants,
    k_n: int,
    g: FunctionalSpec | str,
    delta: float,
) -> float:
    """Large-sample value of the volvol statistic ``A_hat_3`` from the truth channels.

    ``(1 / (4 theta)) int h(c) ds int K (K - K(.-1)) + (theta / 4) int g''(c) c~ ds D_K``
    with ``theta = k_n sqrt(delta)`` and ``D_K`` the volvol denominator. The
    integrals run over the first ``n - 2 k_n + 1`` grid points, the range the
    statistic sums over.
    """
    g = get_functional(g)
    c, vol = _truth_arrays(truth)
    n = c.size - 1
    count = n - 2 * k_n + 1
    if count < 1:
        raise DataError(f"insufficient data: n = {n} must exceed 2 k_n = {2 * k_n}")
    theta = k_n * math.sqrt(delta)
    left = c[:count]
    ih = _riemann(h_transform(g, left), delta)
    ig = _riemann(np.asarray(g.hess(left)) * vol[:count] ** 2, delta)
    kc = kernel_consts
    return ih * kc.cross_KK1 / (4.0 * theta) + theta / 4.0 * ig * kc.volvol_denominator


# recorded next to CLT figures so the variance formula in use is explicit
VARIANCE_FORMULA = "2 (g'(c) c)^2"


def avar(series, g: FunctionalSpec | str, delta: float | None = None) -> float:
    """Riemann sum of the variance integrand ``2 (g'(c) c)^2`` (matrix form for ``d > 1``).

    ``series`` is a :class:`SpotVolSeries`, a :class:`PathTruth` (left end
    points are used) or an array of values on a grid of mesh ``delta``.
    """
    g = get_functional(g)
    if isinstance(series, SpotVolSeries):
        values, delta = series.values, series.delta if delta is None else delta
    elif isinstance(series, PathTruth):
        values = series.c_path[:-1]
    else:
        values = np.asarray(series, dtype=float)
    if delta is None or not delta > 0:
        raise ConfigError("avar needs a positive grid mesh delta")
    return _riemann(variance_integrand(g, values), delta)


def standardize(
    estimate: float,
    truth_value: float,
    oracle: BiasOracle | None,
    avar_value: float,
    delta: float,
) -> float:
    """``[(estimate - truth) / sqrt(delta) - (A1 + A2 + A3)] / sqrt(avar)``.

    Bias-corrected estimators are standardized without an oracle.
    """
    if not avar_value > 0:
        raise ConfigError(f"asymptotic variance must be positive, got {avar_value}")
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    num = (estimate - truth_value) / math.sqrt(delta)
    if oracle is not None:
        num -= oracle.total
    return num / math.sqrt(avar_value)


@dataclass(frozen=True)
class NormalityReport:
    n: int
    mean: float
    sd: float
    skew: float
    kurtosis: float  # excess
    ks_distance: float
    ks_pvalue: float
    degenerate: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def normality_report(z, min_samples: int = 30) -> NormalityReport:
    """Sample moments of ``z`` and its Kolmogorov-Smirnov distance to N(0, 1)."""
    z = np.asarray(z, dtype=float).ravel()
    if z.size < min_samples:
        raise DataError(f"too few samples for a normality report: {z.size} < {min_samples}")
    if not np.all(np.isfinite(z)):
        raise DataError("normality report needs finite values")
    sd = float(np.std(z, ddof=1))
    degenerate = sd == 0.0
    ks = stats.kstest(z, "norm")
    if degenerate:
        skew = kurt = float("nan")
    else:
        skew = float(stats.skew(z))
        kurt = float(stats.kurtosis(z))
    return NormalityReport(
        n=int(z.size),
        mean=float(np.mean(z)),
        sd=sd,
        skew=skew,
        kurtosis=kurt,
        ks_distance=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        degenerate=degenerate,
    )


def confidence_interval(
    estimate: float, avar_hat: float, delta: float, level: float = 0.95
) -> tuple[float, float]:
    """``estimate -/+ q_{(1+level)/2} sqrt(delta avar_hat)``."""
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    if avar_hat < 0 or not math.isfinite(avar_hat):
        raise ConfigError(f"avar_hat must be finite and >= 0, got {avar_hat}")
    half = float(stats.norm.ppf(0.5 * (1.0 + level))) * math.sqrt(delta * avar_hat)
    return (estimate - half, estimate + half)
