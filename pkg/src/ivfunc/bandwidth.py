"""Data-driven choice of the bandwidth constant ``theta`` (``k_n ~ theta / sqrt(delta)``).

One plug-in step: spot volatility at ``init_theta`` feeds estimates of the
nonlinearity mass ``H = int |h(c)| ds`` and the curvature-weighted volvol
``G = int |g''(c)| c~ ds``; the update is the minimizer of the bias proxy

    |A2| + |A3| = H int K^2 / (2 theta) + theta |N_K| G / 2,

with ``N_K = int L^2 + int_{-inf}^0 L - int_0^inf L``, i.e.
``theta* = sqrt(int K^2 H / (|N_K| G))``. For ``g(c) = c^2`` this reads
``sqrt(2 int K^2 IQ / (|N_K| VV))`` with ``IQ = int c^2`` and ``VV = int c~``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ivfunc.errors import ConfigError, DataError
from ivfunc.functionals import FunctionalSpec, get_functional, h_transform
from ivfunc.kernels import KernelConstants, KernelSpec, compute_constants, get_kernel
from ivfunc.sde_sim import SamplePath
from ivfunc.spotvol import (
    NO_TRUNCATION,
    SpotVolSeries,
    TruncationRule,
    k_from_theta,
    nw_spot_vol,
    truncation_level,
)

THETA_MIN = 0.01
THETA_MAX = 5.0


class BandwidthWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BandwidthSelection:
    theta_star: float
    k_n: int
    iterations: int
    inputs: dict = field(default_factory=dict)
    spot_evaluations: int = 0
    fallback: bool = False


def _weighted_diffs(values: np.ndarray, lag: int, weights: np.ndarray | None) -> float:
    d = values[lag:] - values[:-lag]
    sq = d * d
    if weights is not None:
        sq = weights[: sq.size] * sq
    return math.fsum(sq)


def tsrv_volvol(
    spot: SpotVolSeries,
    slow_scale: int | None = None,
    weights: np.ndarray | None = None,
) -> float:
    """Two-scale realized variance of the spot series (its integrated volvol).

    ``(1/K) sum_i (c_{i+K} - c_i)^2 - (nbar_K / N) sum_i (c_{i+1} - c_i)^2`` with
    ``nbar_K = (N - K + 1) / K``; ``K`` defaults to ``ceil(N^(2/3))``. Optional
    ``weights`` multiply each squared difference at its left end point.
    """
    values = np.asarray(spot.values if isinstance(spot, SpotVolSeries) else spot, dtype=float)
    if values.ndim != 1:
        raise ConfigError("tsrv_volvol is implemented for scalar spot series")
    n = values.size
    big = int(slow_scale) if slow_scale is not None else int(math.ceil(n ** (2.0 / 3.0)))
    if big < 1:
        raise ConfigError(f"slow_scale must be positive, got {slow_scale}")
    if n <= 2 * big:
        raise DataError(f"insufficient length: series of {n} needs more than 2 x slow_scale = {2 * big}")
    slow = _weighted_diffs(values, big, weights) / big
    fast = _weighted_diffs(values, 1, weights)
    nbar = (n - big + 1) / big
    return slow - nbar / n * fast


def rv_on_spotvol(
    spot: SpotVolSeries,
    iq_hat: float,
    weights: np.ndarray | None = None,
) -> float:
    """Realized variance of the spot series at lag ``k_n``, corrected for estimation noise.

    For a kernel estimate with window ``k`` the lag-``k`` squared differences
    satisfy ``E sum (c_{i+k} - c_i)^2 ~ 2 k D VV + (4/k) int K(K - K(.-1)) IQ / delta``
    with ``D`` the volvol denominator of the kernel; this solves for ``VV``.
    """
    kernel = spot.kernel
    const = compute_constants(kernel)
    k = spot.k_n
    values = np.asarray(spot.values, dtype=float)
    if values.size <= k:
        raise DataError(f"insufficient length: series of {values.size} for lag {k}")
    raw = _weighted_diffs(values, k, weights)
    noise = 4.0 / k * const.cross_KK1 * iq_hat / spot.delta
    return (raw - noise) / (2.0 * k * const.volvol_denominator)


def realized_quarticity(
    path: SamplePath,
    trunc: TruncationRule = NO_TRUNCATION,
    weights: np.ndarray | None = None,
) -> float:
    """Truncated ``(1 / (3 delta)) sum_j w_j dX_j^4``, an estimate of ``int w c^2``."""
    dx = path.increments
    if dx.ndim != 1:
        raise ConfigError("realized_quarticity is implemented for scalar paths")
    v_n = truncation_level(trunc, path.grid.delta)
    r4 = np.where(np.abs(dx) <= v_n, dx**4, 0.0)
    if weights is not None:
        r4 = weights * r4
    return math.fsum(r4) / (3.0 * path.grid.delta)


def theta_from_moments(h_mass: float, hess_volvol: float, const: KernelConstants) -> float:
    """Unconstrained minimizer ``sqrt(int K^2 H / (|N_K| G))`` of the bias proxy."""
    return math.sqrt(const.int_K2 * h_mass / (abs(const.volvol_numerator) * hess_volvol))


def theta_from_iq_vv(iq: float, vv: float, const: KernelConstants) -> float:
    """The ``g(c) = c^2`` case: ``H = 4 IQ`` and ``G = 2 VV``."""
    return theta_from_moments(4.0 * iq, 2.0 * vv, const)


class _Counter:
    def __init__(self):
        self.calls = 0

    def __call__(self, *args, **kwargs):
        self.calls += 1
        return nw_spot_vol(*args, **kwargs)


def select_theta(
    path: SamplePath,
    kernel: KernelSpec | str,
    g: FunctionalSpec | str,
    init_theta: float = 0.2,
    trunc: TruncationRule = NO_TRUNCATION,
    slow_scale: int | None = None,
    caps: tuple[float, float] = (THETA_MIN, THETA_MAX),
) -> BandwidthSelection:
    """One plug-in update of ``theta`` starting from ``init_theta``.

    Two-sided kernels estimate the volvol by :func:`tsrv_volvol`; one-sided
    kernels use :func:`rv_on_spotvol`. A non-positive volvol estimate falls
    back to ``init_theta`` with a :class:`BandwidthWarning`. Spot volatility is
    evaluated exactly twice (at ``init_theta`` and at the selected value).
    """
    if not init_theta > 0:
        raise ConfigError(f"init_theta must be positive, got {init_theta}")
    kernel = get_kernel(kernel)
    g = get_functional(g)
    if g.dim != 1 or path.dim != 1:
        raise ConfigError("select_theta supports scalar paths and functionals")
    const = compute_constants(kernel)
    lo_cap, hi_cap = caps
    spot_of = _Counter()
    delta = path.grid.delta

    spot = spot_of(path, kernel, k_from_theta(init_theta, delta), trunc)
    c = np.maximum(spot.values, 1e-300)
    # weights turning int c^2 into int |h(c)| and int c~ into int |g''(c)| c~
    w_h = np.abs(h_transform(g, c)) / (c * c)
    w_g = np.abs(np.asarray(g.hess(c), dtype=float))
    iq_hat = realized_quarticity(path, trunc)
    h_mass = realized_quarticity(path, trunc, weights=w_h)

    if kernel.two_sided:
        vv_hat = tsrv_volvol(spot, slow_scale)
        g_mass = tsrv_volvol(spot, slow_scale, weights=w_g)
        method = "tsrv"
    else:
        vv_hat = rv_on_spotvol(spot, iq_hat)
        g_mass = _rv_weighted(spot, path, trunc, w_g)
        method = "rv_on_spotvol"

    inputs = {
        "iq_hat": iq_hat,
        "volvol_hat": vv_hat,
        "h_mass": h_mass,
        "hess_volvol": g_mass,
        "volvol_method": method,
    }
    fallback = False
    if not g_mass > 0 or not h_mass > 0:
        warnings.warn(
            f"non-positive plug-in inputs (H = {h_mass:.3g}, G = {g_mass:.3g}); "
            f"keeping init_theta = {init_theta}",
            BandwidthWarning,
            stacklevel=2,
        )
        theta = float(init_theta)
        fallback = True
    else:
        theta = theta_from_moments(h_mass, g_mass, const)
    theta = min(max(theta, lo_cap), hi_cap)
    k = k_from_theta(theta, delta)
    # bias-corrected estimators need n > 2 k_n
    k_max = max(2, (path.grid.n_steps - 1) // 2)
    if k > k_max:
        k = k_max
        theta = k * math.sqrt(delta)
        inputs["window_capped"] = True
    spot_of(path, kernel, k, trunc)
    return BandwidthSelection(theta, k, 1, inputs, spot_of.calls, fallback)


def _rv_weighted(spot, path, trunc, w_g):
    """Curvature-weighted variant of :func:`rv_on_spotvol`; the noise term uses ``int w c^2``."""
    noise_mass = realized_quarticity(path, trunc, weights=w_g)
    return rv_on_spotvol(spot, noise_mass, weights=w_g)
