"""Estimators of integrated volatility functionals ``int_0^T g(c_s) ds``.

Kernel plug-in estimators work on a :class:`SpotVolSeries` from
:func:`nw_spot_vol`; the forward-window (JR) variants and jackknife
combinations use :func:`jr_spot_vol`. Indices in docstrings are 1-based as in
the formulas, arrays are 0-based.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from ivfunc.errors import ConfigError, DataError, DomainError
from ivfunc.functionals import FunctionalSpec, get_functional, h_transform, hessian_quadratic
from ivfunc.kernels import compute_constants, discrete_constants_all, get_kernel
from ivfunc.sde_sim import SamplePath
from ivfunc.spotvol import (
    NO_TRUNCATION,
    SpotVolSeries,
    TruncationRule,
    jr_spot_vol,
    k_from_theta,
    nw_spot_vol,
)

ConstantMode = Literal["asymptotic", "finite-sample"]
EstimatorKind = Literal["plugin", "corrected", "undersmoothed", "jr", "jr_corrected", "jackknife"]
_KINDS = ("plugin", "corrected", "undersmoothed", "jr", "jr_corrected", "jackknife")


class UndersmoothingWarning(UserWarning):
    """Window length outside the undersmoothing regime."""


# ---------------------------------------------------------------------------
# Configuration


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)  # exact binary value of a float


@dataclass(frozen=True)
class JackknifeConfig:
    """Linear combination ``sum_m psi_m V^JR(k_m)`` of forward-window estimators.

    Weights are checked exactly in rational arithmetic: ``sum psi = 1`` and
    ``sum psi / k = 0`` always, plus ``sum psi * k = 0`` for three scales.
    """

    windows: tuple[int, ...]
    weights: tuple[Fraction, ...]
    boundary_adjust: bool = False

    def __post_init__(self):
        windows = tuple(int(k) for k in self.windows)
        if any(k != w for k, w in zip(windows, self.windows)) or any(k < 1 for k in windows):
            raise ConfigError(f"jackknife windows must be positive integers, got {self.windows}")
        if len(windows) not in (2, 3):
            raise ConfigError(f"jackknife needs 2 or 3 windows, got {len(windows)}")
        if len(set(windows)) != len(windows):
            raise ConfigError(f"jackknife windows must be distinct, got {windows}")
        try:
            weights = tuple(_as_fraction(w) for w in self.weights)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"jackknife weights must be rational numbers: {exc}") from exc
        if len(weights) != len(windows):
            raise ConfigError("jackknife windows and weights differ in length")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "weights", weights)
        for name, value in self.identities().items():
            if value != 0:
                raise ConfigError(f"jackknife identity violated: {name} (residual {value})")

    def identities(self) -> dict[str, Fraction]:
        """Residuals of the weight identities (all zero for a valid config)."""
        out = {
            "sum(psi) = 1": sum(self.weights, Fraction(0)) - 1,
            "sum(psi/k) = 0": sum((w / k for w, k in zip(self.weights, self.windows)), Fraction(0)),
        }
        if len(self.windows) == 3:
            out["sum(psi*k) = 0"] = sum(
                (w * k for w, k in zip(self.weights, self.windows)), Fraction(0)
            )
        return out

    @classmethod
    def solve(cls, windows: Sequence[int], boundary_adjust: bool = False) -> "JackknifeConfig":
        return cls(tuple(windows), jackknife_weights(windows), boundary_adjust)


def jackknife_weights(windows: Sequence[int]) -> tuple[Fraction, ...]:
    """Unique weights satisfying the jackknife identities for 2 or 3 windows."""
    ks = [Fraction(int(k)) for k in windows]
    if len(ks) == 2:
        rows = [[Fraction(1)] * 2, [1 / k for k in ks]]
    elif len(ks) == 3:
        rows = [[Fraction(1)] * 3, [1 / k for k in ks], list(ks)]
    else:
        raise ConfigError(f"jackknife needs 2 or 3 windows, got {len(ks)}")
    rhs = [Fraction(1)] + [Fraction(0)] * (len(ks) - 1)
    # Gauss-Jordan elimination over the rationals
    m = len(ks)
    a = [row[:] + [r] for row, r in zip(rows, rhs)]
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            raise ConfigError(f"jackknife windows {tuple(windows)} give a singular system")
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return tuple(a[r][m] for r in range(m))


MS_WEIGHTS = (Fraction(-5, 2), Fraction(8), Fraction(-9, 2))
TS_WEIGHTS = (Fraction(-1), Fraction(2))


def ms_config(base: int = 15) -> JackknifeConfig:
    """Multi-scale jackknife on ``(base, 2 base, 3 base)``."""
    return JackknifeConfig((base, 2 * base, 3 * base), MS_WEIGHTS)


def ts_config(base: int = 15, boundary_adjust: bool = False) -> JackknifeConfig:
    """Two-scale jackknife on ``(base, 2 base)``."""
    return JackknifeConfig((base, 2 * base), TS_WEIGHTS, boundary_adjust)


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings of one estimator; exactly one of ``theta`` and ``k_n`` is given."""

    kernel_id: str = "exp"
    theta: float | None = None
    k_n: int | None = None
    truncation: TruncationRule = NO_TRUNCATION
    constant_mode: ConstantMode = "finite-sample"
    estimator_kind: EstimatorKind = "corrected"
    jackknife: JackknifeConfig | None = None

    def __post_init__(self):
        if self.estimator_kind not in _KINDS:
            raise ConfigError(f"unknown estimator_kind {self.estimator_kind!r}")
        if self.constant_mode not in ("asymptotic", "finite-sample"):
            raise ConfigError(f"unknown constant_mode {self.constant_mode!r}")
        if self.estimator_kind == "jackknife":
            if self.jackknife is None:
                raise ConfigError("estimator_kind 'jackknife' needs a JackknifeConfig")
            return
        if (self.theta is None) == (self.k_n is None):
            raise ConfigError("exactly one of theta and k_n must be set")
        if self.theta is not None and not self.theta > 0:
            raise ConfigError(f"theta must be positive, got {self.theta}")
        if self.k_n is not None and (int(self.k_n) != self.k_n or self.k_n < 1):
            raise ConfigError(f"k_n must be a positive integer, got {self.k_n}")
        if self.estimator_kind not in ("jr", "jr_corrected"):
            get_kernel(self.kernel_id)

    def window(self, delta: float) -> int:
        if self.k_n is not None:
            return int(self.k_n)
        return k_from_theta(self.theta, delta)

    @property
    def label(self) -> str:
        if self.estimator_kind == "jackknife":
            j = self.jackknife
            name = "MS" if len(j.windows) == 3 else ("TS'" if j.boundary_adjust else "TS")
            return f"{name}{list(j.windows)}"
        return self.estimator_kind


# ---------------------------------------------------------------------------
# Building blocks


def _eval(fn, x, what: str, offset: int = 1):
    """Evaluate ``fn(x)``, re-raising domain errors with the 1-based grid index."""
    try:
        return np.asarray(fn(x), dtype=float)
    except DomainError as exc:
        i = None if exc.index is None else exc.index + offset
        raise DomainError(f"{what} undefined at i = {i}: {exc}", index=i) from exc


def _g_values(spot: SpotVolSeries, g: FunctionalSpec, offset: int = 1) -> np.ndarray:
    return _eval(g.g, spot.values, f"g = {g.name}", offset)


def _h_values(spot: SpotVolSeries, g: FunctionalSpec) -> np.ndarray:
    return _eval(lambda x: h_transform(g, x), spot.values, f"h-transform of {g.name}")


def _hess_diffs(spot: SpotVolSeries, g: FunctionalSpec, count: int) -> np.ndarray:
    """``sum d2g(c_i)[c_{i+k} - c_i]^2`` for ``i = 1..count``."""
    k = spot.k_n
    v = spot.values
    diff = v[k : k + count] - v[:count]
    x = v[:count]
    return _eval(lambda z: hessian_quadratic(g, z, diff), x, f"hessian of {g.name}")


def _check_length(spot: SpotVolSeries) -> int:
    count = spot.n - 2 * spot.k_n + 1
    if count < 1:
        raise DataError(
            f"insufficient data: n = {spot.n} must exceed 2 k_n = {2 * spot.k_n}"
        )
    return count


def v_plugin(spot: SpotVolSeries, g: FunctionalSpec | str) -> float:
    """Weighted plug-in ``V = delta * sum_{i=1}^n g(c_hat_i) Kbar(t_i)``."""
    g = get_functional(g)
    vals = _g_values(spot, g)
    return spot.delta * math.fsum(vals * spot.kbar)


def a_hat_3(spot: SpotVolSeries, g: FunctionalSpec | str) -> float:
    """Volvol-bias statistic ``(sqrt(delta)/8) sum_{i=1}^{n-2k+1} d2g(c_i)(c_{i+k}-c_i)^2``."""
    g = get_functional(g)
    count = _check_length(spot)
    return math.sqrt(spot.delta) / 8.0 * math.fsum(_hess_diffs(spot, g, count))


def _spot(path: SamplePath, cfg: EstimatorConfig) -> SpotVolSeries:
    k = cfg.window(path.grid.delta)
    return nw_spot_vol(path, cfg.kernel_id, k, cfg.truncation)


def corrected_from_spot(
    spot: SpotVolSeries, g: FunctionalSpec | str, constant_mode: ConstantMode = "finite-sample"
) -> float:
    """Bias-corrected estimator on a precomputed kernel spot series.

    ``V + k delta g(c_1) int_0^inf L - k delta g(c_n) int_-inf^0 L
    - 2 sqrt(delta) C_K1 A_hat_3 + (1/(2k)) V(h) [C_K2 - int K^2]``.

    In ``finite-sample`` mode the kernel integrals are replaced at every grid
    point by their discrete sums; ``C_K1`` and ``C_K2`` are then evaluated
    per point and kept inside the sums.
    """
    g = get_functional(g)
    kernel = spot.kernel
    const = compute_constants(kernel)
    n, k, dl = spot.n, spot.k_n, spot.delta
    count = _check_length(spot)

    gv = _g_values(spot, g)
    hv = _h_values(spot, g)
    hd = _hess_diffs(spot, g, count)
    v = dl * math.fsum(gv * spot.kbar)

    if constant_mode == "asymptotic":
        edge = k * dl * (gv[0] * const.int_L_pos - gv[n - 1] * const.int_L_neg)
        volvol = -2.0 * const.c_k1 * (dl / 8.0) * math.fsum(hd)
        nonlin = (const.c_k2 - const.int_K2) / (2.0 * k) * dl * math.fsum(hv * spot.kbar)
    elif constant_mode == "finite-sample":
        dc = discrete_constants_all(kernel, n, k)
        c1 = (dc.L2_sum + dc.L_neg_sum - dc.L_pos_sum) / const.volvol_denominator
        c2 = const.cross_KK1 * c1
        edge = k * dl * (gv[0] * dc.L_pos_sum[0] - gv[n - 1] * dc.L_neg_sum[n - 1])
        volvol = -2.0 * (dl / 8.0) * math.fsum(c1[:count] * hd)
        nonlin = dl / (2.0 * k) * math.fsum(hv * spot.kbar * (c2 - dc.K2_sum))
    else:
        raise ConfigError(f"unknown constant_mode {constant_mode!r}")
    return v + edge + volvol + nonlin


def v_corrected(path: SamplePath, cfg: EstimatorConfig, g: FunctionalSpec | str) -> float:
    """Bias-corrected kernel estimator (see :func:`corrected_from_spot`)."""
    return corrected_from_spot(_spot(path, cfg), g, cfg.constant_mode)


def undersmoothed_from_spot(spot: SpotVolSeries, g: FunctionalSpec | str) -> float:
    """``delta * sum_i [g(c_i) - h(c_i) int K^2 / (2k)] Kbar(t_i)``."""
    g = get_functional(g)
    const = compute_constants(spot.kernel)
    n, k = spot.n, spot.k_n
    if k * k >= n or k**3 <= n:
        warnings.warn(
            f"k_n = {k} is outside the undersmoothing regime for n = {n} "
            "(needs k_n^2 << n << k_n^3); edge and volvol biases are not removed",
            UndersmoothingWarning,
            stacklevel=3,
        )
    gv = _g_values(spot, g)
    hv = _h_values(spot, g)
    return spot.delta * math.fsum((gv - hv * const.int_K2 / (2.0 * k)) * spot.kbar)


def v_undersmoothed(path: SamplePath, cfg: EstimatorConfig, g: FunctionalSpec | str) -> float:
    return undersmoothed_from_spot(_spot(path, cfg), g)


# ---------------------------------------------------------------------------
# Forward-window (JR) estimators


def jr_from_spot(spot: SpotVolSeries, g: FunctionalSpec | str) -> float:
    """``V^JR = delta * sum_{i=1}^{n-k-1} g(c^JR_i)``."""
    g = get_functional(g)
    m = spot.n - spot.k_n - 1
    if m < 1:
        raise DataError(f"insufficient data: n = {spot.n} must exceed k_n + 1 = {spot.k_n + 1}")
    return spot.delta * math.fsum(_eval(g.g, spot.values[:m], f"g = {g.name}"))


def jr_corrected_from_spot(spot: SpotVolSeries, g: FunctionalSpec | str) -> float:
    """``V^JR + (k delta/2)(g(c_1) + g(c_{n-k+1})) - 3 V(h)^JR/(4k) + (delta/8) sum d2g (dc)^2``."""
    g = get_functional(g)
    n, k, dl = spot.n, spot.k_n, spot.delta
    count = _check_length(spot)
    m = n - k - 1
    gv = _g_values(spot, g)
    hv = _h_values(spot, g)
    v = dl * math.fsum(gv[:m])
    edge = 0.5 * k * dl * (gv[0] + gv[n - k])
    nonlin = -3.0 / (4.0 * k) * dl * math.fsum(hv[:m])
    volvol = dl / 8.0 * math.fsum(_hess_diffs(spot, g, count))
    return v + edge + nonlin + volvol


def v_jr(path: SamplePath, cfg: EstimatorConfig, g: FunctionalSpec | str) -> float:
    return jr_from_spot(jr_spot_vol(path, cfg.window(path.grid.delta), cfg.truncation), g)


def v_jr_corrected(path: SamplePath, cfg: EstimatorConfig, g: FunctionalSpec | str) -> float:
    spot = jr_spot_vol(path, cfg.window(path.grid.delta), cfg.truncation)
    return jr_corrected_from_spot(spot, g)


def jackknife(
    path: SamplePath,
    jcfg: JackknifeConfig,
    g: FunctionalSpec | str,
    trunc: TruncationRule = NO_TRUNCATION,
) -> float:
    """``sum_m psi_m V^JR(k_m)``, plus ``psi_m (k_m delta/2)(g(c_1) + g(c_{n-k_m+1}))``
    per scale when ``boundary_adjust`` is set."""
    g = get_functional(g)
    dl = path.grid.delta
    total = []
    for psi, k in zip(jcfg.weights, jcfg.windows):
        spot = jr_spot_vol(path, k, trunc)
        est = jr_from_spot(spot, g)
        if jcfg.boundary_adjust:
            ends = _eval(g.g, spot.values[[0, -1]], f"g = {g.name}")
            est += 0.5 * k * dl * float(ends[0] + ends[1])
        total.append(float(psi) * est)
    return math.fsum(total)


def estimate(path: SamplePath, cfg: EstimatorConfig, g: FunctionalSpec | str) -> float:
    """Dispatch on ``cfg.estimator_kind``."""
    kind = cfg.estimator_kind
    if kind == "plugin":
        return v_plugin(_spot(path, cfg), g)
    if kind == "corrected":
        return v_corrected(path, cfg, g)
    if kind == "undersmoothed":
        return v_undersmoothed(path, cfg, g)
    if kind == "jr":
        return v_jr(path, cfg, g)
    if kind == "jr_corrected":
        return v_jr_corrected(path, cfg, g)
    return jackknife(path, cfg.jackknife, g, cfg.truncation)
