"""Smoothing kernels, their survivor transform L, and the derived constants.

``L(t) = int_t^inf K`` for ``t > 0`` and ``L(t) = -int_{-inf}^t K`` for ``t <= 0``.
All discrete quantities are computed in index space: with bandwidth
``b = k_n * delta`` the scaled kernel ``K_b(t_{j-1} - t_i)`` only depends on the
integer offset ``j - 1 - i`` through ``K((j - 1 - i) / k_n) / b``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from ivfunc.errors import ConfigError, NumericError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A bounded kernel ``K`` with ``int K = 1``.

    ``breakpoints`` lists points where ``K`` is not smooth; quadrature panels
    are split there. ``tail_decay_hint`` is the length scale of the tails of an
    unbounded-support kernel and sets where the quadrature truncates them.
    """

    name: str
    evaluate: ArrayFn
    support: tuple[float, float]
    closed_form_L: ArrayFn | None = None
    tail_decay_hint: float = 1.0
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    @property
    def two_sided(self) -> bool:
        return self.support[0] < 0 < self.support[1]

    @property
    def bounded_support(self) -> bool:
        return math.isfinite(self.support[0]) and math.isfinite(self.support[1])


def _exp_K(x):
    return 0.5 * np.exp(-np.abs(x))


def _exp_L(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, 0.5 * np.exp(-np.abs(t)), -0.5 * np.exp(-np.abs(t)))


def _unif2_K(x):
    return np.where(np.abs(x) <= 1.0, 0.5, 0.0)


def _unif2_L(t):
    t = np.asarray(t, dtype=float)
    pos = 0.5 * np.clip(1.0 - t, 0.0, 1.0)
    neg = -0.5 * np.clip(1.0 + t, 0.0, 1.0)
    return np.where(t > 0, pos, neg)


def _unifR_K(x):
    # half-open [0, 1) so that the discrete normalizer is exactly 1 in the interior
    return np.where((x >= 0.0) & (x < 1.0), 1.0, 0.0)


def _unifR_L(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.clip(1.0 - t, 0.0, 1.0), 0.0)


EXP = KernelSpec("exp", _exp_K, (-math.inf, math.inf), _exp_L, 1.0, (0.0,))
UNIF2 = KernelSpec("unif2", _unif2_K, (-1.0, 1.0), _unif2_L, 1.0, (-1.0, 1.0))
UNIFR = KernelSpec("unifR", _unifR_K, (0.0, 1.0), _unifR_L, 1.0, (0.0, 1.0))

_BUILTIN = {"exp": EXP, "unif2": UNIF2, "unifR": UNIFR}


def from_table(xs, ks, name: str = "table", normalize: bool = False) -> KernelSpec:
    """Kernel given by values on a grid, linearly interpolated and zero outside.

    ``L`` is integrated exactly (the interpolant is piecewise linear).
    """
    xs = np.asarray(xs, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if xs.ndim != 1 or xs.shape != ks.shape or xs.size < 2:
        raise ConfigError("kernel table needs two equal-length columns with >= 2 rows")
    if np.any(np.diff(xs) <= 0):
        raise ConfigError("kernel table abscissae must be strictly increasing")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ks))):
        raise ConfigError("kernel table contains non-finite values")
    if xs[0] > 0 or xs[-1] < 0:
        raise ConfigError("kernel table support must contain 0")
    seg = 0.5 * (ks[1:] + ks[:-1]) * np.diff(xs)
    total = float(np.sum(seg))
    if normalize:
        ks = ks / total
        seg = seg / total
    elif abs(total - 1.0) > 1e-8:
        raise ConfigError(f"kernel table integrates to {total!r}, expected 1")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    mass = cum[-1]
    xs_t, ks_t = xs.copy(), ks.copy()

    def K(x):
        return np.interp(x, xs_t, ks_t, left=0.0, right=0.0)

    def cdf(t):
        # exact integral of the linear interpolant from xs[0] to t
        t = np.clip(np.asarray(t, dtype=float), xs_t[0], xs_t[-1])
        idx = np.clip(np.searchsorted(xs_t, t, side="right") - 1, 0, xs_t.size - 2)
        h = t - xs_t[idx]
        slope = (ks_t[idx + 1] - ks_t[idx]) / (xs_t[idx + 1] - xs_t[idx])
        return cum[idx] + ks_t[idx] * h + 0.5 * slope * h * h

    def L(t):
        t = np.asarray(t, dtype=float)
        F = cdf(t)
        return np.where(t > 0, mass - F, -F)

    return KernelSpec(
        name=name,
        evaluate=K,
        support=(float(xs[0]), float(xs[-1])),
        closed_form_L=L,
        tail_decay_hint=float(xs[-1] - xs[0]),
        breakpoints=tuple(float(v) for v in xs),
    )


def load_table_kernel(path: str | Path, normalize: bool = False) -> KernelSpec:
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read kernel table {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigError(f"kernel table {path} must have two columns (x, K(x))")
    return from_table(data[:, 0], data[:, 1], name=f"table:{path}", normalize=normalize)


def get_kernel(name: str | KernelSpec) -> KernelSpec:
    """Resolve ``"exp" | "unif2" | "unifR" | "table:<csv path>"`` to a kernel."""
    if isinstance(name, KernelSpec):
        return name
    if name in _BUILTIN:
        return _BUILTIN[name]
    if isinstance(name, str) and name.startswith("table:"):
        return load_table_kernel(name[len("table:"):])
    raise ConfigError(f"unknown kernel {name!r}; expected exp, unif2, unifR or table:<path>")


# ---------------------------------------------------------------------------
# Quadrature


def _tail_cut(kernel: KernelSpec, tol: float) -> tuple[float, float]:
    lo, hi = kernel.support
    cut = kernel.tail_decay_hint * math.log(1.0 / tol) + 2.0
    return (max(lo, -cut), min(hi, cut))


def _integrate(f, lo: float, hi: float, points, tol: float) -> float:
    """Integrate ``f`` on [lo, hi] with adaptive Gauss-Kronrod panels split at ``points``."""
    edges = sorted({lo, hi, *(p for p in points if lo < p < hi)})
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        # keep panels short so smooth tails are resolved without subdivision warnings
        n_sub = max(1, int(math.ceil((b - a) / 4.0)))
        sub = np.linspace(a, b, n_sub + 1)
        for u, v in zip(sub[:-1], sub[1:]):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", integrate.IntegrationWarning)
                val, err = integrate.quad(
                    lambda z: float(f(np.float64(z))), u, v,
                    epsabs=tol * 1e-2, epsrel=tol * 1e-2, limit=200,
                )
            # a roundoff warning with a small error estimate is only QUADPACK
            # failing to certify a tolerance near machine precision
            if caught and not err <= tol * max(1.0, abs(val)):
                raise NumericError(
                    f"quadrature did not converge on [{u:g}, {v:g}]: {caught[0].message}"
                )
            total += val
    return total


def eval_L(kernel: KernelSpec, t, tol: float = 1e-12):
    """Survivor transform ``L(t)``; closed form when available, quadrature otherwise."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise ConfigError("eval_L needs finite arguments")
    if kernel.closed_form_L is not None:
        out = kernel.closed_form_L(t_arr)
    else:
        lo, hi = _tail_cut(kernel, tol)
        out = np.empty_like(t_arr)
        for idx, tv in np.ndenumerate(t_arr):
            if tv > 0:
                out[idx] = _integrate(kernel, max(tv, lo), hi, kernel.breakpoints, tol) if tv < hi else 0.0
            else:
                out[idx] = -_integrate(kernel, lo, min(tv, hi), kernel.breakpoints, tol) if tv > lo else 0.0
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class KernelConstants:
    int_K: float
    int_K2: float
    int_L_pos: float
    int_L_neg: float
    int_L2: float
    cross_LL1: float
    cross_KK1: float
    int_K_absz_cap1: float
    c_k1: float
    c_k2: float

    @property
    def volvol_numerator(self) -> float:
        """``int L^2 + int_{-inf}^0 L - int_0^inf L``; negative for every kernel."""
        return self.int_L2 + self.int_L_neg - self.int_L_pos

    @property
    def volvol_denominator(self) -> float:
        return self.cross_LL1 + 0.5 - self.int_K_absz_cap1


@lru_cache(maxsize=64)
def compute_constants(kernel: KernelSpec, quadrature_tol: float = 1e-12) -> KernelConstants:
    """All integral constants of ``kernel`` by adaptive quadrature."""
    kernel = get_kernel(kernel)
    tol = quadrature_tol
    lo, hi = _tail_cut(kernel, tol)
    K = kernel.evaluate

    def L(z):
        return eval_L(kernel, z, tol)

    kinks = set(kernel.breakpoints) | {0.0}
    pts = sorted(kinks | {p + 1.0 for p in kinks} | {-1.0, 1.0})
    # L(z - 1) is non-zero up to hi + 1 (right tail of a shifted kernel)
    lo_L, hi_L = lo, hi + 1.0

    int_K = _integrate(K, lo, hi, pts, tol)
    if abs(int_K - 1.0) > max(1e-8, 10 * tol):
        raise ConfigError(f"kernel {kernel.name!r} integrates to {int_K!r}, expected 1")
    int_K2 = _integrate(lambda z: K(z) ** 2, lo, hi, pts, tol)
    int_L_pos = _integrate(L, 0.0, max(hi, 0.0), pts, tol) if hi > 0 else 0.0
    int_L_neg = _integrate(L, min(lo, 0.0), 0.0, pts, tol) if lo < 0 else 0.0
    int_L2 = _integrate(lambda z: L(z) ** 2, lo, hi, pts, tol)
    cross_LL1 = _integrate(lambda z: L(z) * (L(z) - L(z - 1.0)), lo_L, hi_L, pts, tol)
    cross_KK1 = _integrate(lambda z: K(z) * (K(z) - K(z - 1.0)), lo, hi, pts, tol)
    int_K_abs = _integrate(lambda z: K(z) * min(abs(z), 1.0), lo, hi, pts, tol)

    denom = cross_LL1 + 0.5 - int_K_abs
    if abs(denom) <= tol:
        raise NumericError(f"degenerate kernel {kernel.name!r}: C_K1 denominator is {denom!r}")
    c_k1 = (int_L2 + int_L_neg - int_L_pos) / denom
    return KernelConstants(
        int_K=int_K,
        int_K2=int_K2,
        int_L_pos=int_L_pos,
        int_L_neg=int_L_neg,
        int_L2=int_L2,
        cross_LL1=cross_LL1,
        cross_KK1=cross_KK1,
        int_K_absz_cap1=int_K_abs,
        c_k1=c_k1,
        c_k2=cross_KK1 * c_k1,
    )


# ---------------------------------------------------------------------------
# Discrete (finite-sample) quantities


def _check_window(n: int, k_n: int) -> None:
    if int(k_n) != k_n or k_n < 1:
        raise ConfigError(f"k_n must be a positive integer, got {k_n}")
    if k_n >= n:
        raise ConfigError(f"invalid bandwidth: k_n = {k_n} must be smaller than n = {n}")


def offset_weights(kernel: KernelSpec, n: int, k_n: int) -> np.ndarray:
    """``K(m / k_n)`` for integer offsets ``m = -n-1, ..., n`` (index ``m + n + 1``)."""
    m = np.arange(-n - 1, n + 1, dtype=float)
    return np.asarray(kernel(m / k_n), dtype=float)


@lru_cache(maxsize=128)
def kbar_all(kernel: KernelSpec, n: int, k_n: int) -> np.ndarray:
    """``Kbar(t_i) = delta * sum_j K_b(t_{j-1} - t_i)`` for ``i = 1..n``.

    Depends on the grid only through ``n`` and ``k_n``.
    """
    _check_window(n, k_n)
    w = offset_weights(kernel, n, k_n)
    prefix = np.concatenate([[0.0], np.cumsum(w)])  # prefix[p] = sum of w[:p]
    i = np.arange(1, n + 1)
    # offsets m = -i .. n-1-i  <->  array positions (m + n + 1)
    lo = -i + n + 1
    hi = n - 1 - i + n + 1
    out = (prefix[hi + 1] - prefix[lo]) / k_n
    out.setflags(write=False)
    return out


def kbar(kernel: KernelSpec, grid, i: int, k_n: int) -> float:
    n = grid.n_steps
    _check_window(n, k_n)
    if not 1 <= i <= n:
        raise ConfigError(f"index i = {i} outside 1..{n}")
    j = np.arange(1, n + 1)
    return float(np.sum(kernel((j - 1 - i) / k_n)) / k_n)


def discrete_L(kernel: KernelSpec, grid, i: int, j: int, k_n: int) -> float:
    """Discrete analogue of ``L((t_j - t_i) / b)``, unscaled (units of 1 / time).

    ``-sum_{l=1}^{j} K_b(t_{l-1} - t_i)`` if ``j <= i``, else
    ``sum_{l=j+1}^{n} K_b(t_{l-1} - t_i)``. Multiply by ``delta`` to compare
    with ``L``.
    """
    n = grid.n_steps
    b = k_n * grid.delta
    if j <= i:
        l = np.arange(1, j + 1)
        return float(-np.sum(kernel((l - 1 - i) / k_n)) / b)
    l = np.arange(j + 1, n + 1)
    return float(np.sum(kernel((l - 1 - i) / k_n)) / b)


def discrete_constants(kernel: KernelSpec, grid, i: int, k_n: int) -> dict:
    """Finite-sample replacements of the kernel integrals at grid point ``i``.

    * ``K2_sum = delta * b * sum_j K_b(t_{j-1} - t_i)^2`` (the spot estimator's own weights)
    * ``L_pos_sum``/``L_neg_sum``: ``(delta / b) * sum_j L((t_{j-1} - t_i) / b)``
      split by the sign of ``t_{j-1} - t_i``, with ``L`` taken as
      ``delta * discrete_L``; ``L_sum`` is their total.
    * ``L2_sum = (delta / b) * sum_j L((t_j - t_i) / b)^2``.

    Direct O(n^2) evaluation; :func:`discrete_constants_all` is the vectorized
    counterpart used by the estimators.
    """
    n = grid.n_steps
    _check_window(n, k_n)
    dl = grid.delta
    scale = dl / (k_n * dl)
    j = np.arange(1, n + 1)
    K2 = scale * float(np.sum(kernel((j - 1 - i) / k_n) ** 2))
    Lvals = np.array([dl * discrete_L(kernel, grid, i, jj, k_n) for jj in range(0, n + 1)])
    prev = Lvals[j - 1]  # L at t_{j-1}
    neg = (j - 1) <= i
    L_neg = scale * float(np.sum(prev[neg]))
    L_pos = scale * float(np.sum(prev[~neg]))
    L2 = scale * float(np.sum(Lvals[j] ** 2))
    return {"K2_sum": K2, "L_sum": L_pos + L_neg, "L_pos_sum": L_pos, "L_neg_sum": L_neg, "L2_sum": L2}


@dataclass(frozen=True)
class DiscreteConstants:
    K2_sum: np.ndarray
    L_pos_sum: np.ndarray
    L_neg_sum: np.ndarray
    L2_sum: np.ndarray

    @property
    def L_sum(self) -> np.ndarray:
        return self.L_pos_sum + self.L_neg_sum


def _range_sum(prefix: np.ndarray, lo, hi):
    """Sum of the underlying array over positions lo..hi inclusive (0 when empty)."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    out = prefix[np.maximum(hi + 1, lo)] - prefix[lo]
    return np.where(hi >= lo, out, 0.0)


@lru_cache(maxsize=64)
def discrete_constants_all(kernel: KernelSpec, n: int, k_n: int) -> DiscreteConstants:
    """:func:`discrete_constants` for every ``i = 1..n`` in O(n) via prefix sums."""
    _check_window(n, k_n)
    w = offset_weights(kernel, n, k_n)  # position p <-> offset m = p - n - 1
    off = n + 1

    def pos(m):
        return np.asarray(m) + off

    P = np.cumsum(w)  # P[p] = sum of w[0..p]; offsets below -n-1 contribute nothing
    zeros = np.concatenate([[0.0]])
    preP = np.concatenate([zeros, np.cumsum(P)])
    preP2 = np.concatenate([zeros, np.cumsum(P * P)])
    preW2 = np.concatenate([zeros, np.cumsum(w * w)])

    i = np.arange(1, n + 1)
    k = float(k_n)

    K2 = _range_sum(preW2, pos(-i), pos(n - 1 - i)) / k

    base_neg = P[pos(-1 - i)]
    base_pos = P[pos(n - 1 - i)]

    # L_neg_sum: j' = 0..min(i, n-1), q = j'-1-i
    q_hi = np.minimum(i, n - 1) - 1 - i
    q_lo = -1 - i
    cnt = q_hi - q_lo + 1
    sP = _range_sum(preP, pos(q_lo), pos(q_hi))
    L_neg = -(sP - cnt * base_neg) / (k * k)

    # L_pos_sum: j' = i+1..n-1, q = 0..n-2-i
    q_lo = np.zeros_like(i)
    q_hi = n - 2 - i
    cnt = np.maximum(q_hi - q_lo + 1, 0)
    sP = _range_sum(preP, pos(q_lo), pos(q_hi))
    L_pos = (cnt * base_pos - sP) / (k * k)

    # L2_sum over j = 1..n: negative branch q = -i..-1, positive q = 0..n-1-i
    sP = _range_sum(preP, pos(-i), pos(-1))
    sP2 = _range_sum(preP2, pos(-i), pos(-1))
    neg2 = sP2 - 2.0 * base_neg * sP + i * base_neg**2
    cnt = n - i
    sP = _range_sum(preP, pos(np.zeros_like(i)), pos(n - 1 - i))
    sP2 = _range_sum(preP2, pos(np.zeros_like(i)), pos(n - 1 - i))
    pos2 = cnt * base_pos**2 - 2.0 * base_pos * sP + sP2
    L2 = (neg2 + pos2) / (k**3)

    arrays = [K2, L_pos, L_neg, np.maximum(L2, 0.0)]
    for a in arrays:
        a.setflags(write=False)
    return DiscreteConstants(*arrays)
