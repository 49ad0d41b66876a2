"""Spot variance estimators: kernel (Nadaraya-Watson) and forward-uniform (JR)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from ivfunc.errors import ConfigError, DataError
from ivfunc.kernels import KernelSpec, get_kernel, kbar_all
from ivfunc.sde_sim import SamplePath, TimeGrid

# above this many multiply-adds an unbounded kernel is applied through the FFT
_DIRECT_LIMIT = 4_000_000


@dataclass(frozen=True)
class TruncationRule:
    """Truncation level ``v_n = alpha * delta**varpi``; ``alpha = inf`` disables it."""

    alpha: float = math.inf
    varpi: float = 0.49

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"truncation alpha must be positive, got {self.alpha}")
        if not 0 < self.varpi < 0.5:
            raise ConfigError(f"truncation varpi must lie in (0, 1/2), got {self.varpi}")

    @property
    def active(self) -> bool:
        return math.isfinite(self.alpha)

    @staticmethod
    def lower_varpi(ell: int = 4, r: float = 0.0) -> float:
        """Smallest admissible ``varpi`` for jumps of activity ``r`` and growth ``ell``."""
        return (2 * ell - 1) / (2 * (2 * ell - r))


NO_TRUNCATION = TruncationRule()


def truncation_level(trunc: TruncationRule, delta: float) -> float:
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    if not trunc.alpha > 0:
        raise ConfigError(f"truncation alpha must be positive, got {trunc.alpha}")
    if not trunc.active:
        return math.inf
    return trunc.alpha * delta**trunc.varpi


@dataclass(frozen=True)
class SpotVolSeries:
    """Spot estimates ``c_hat[i-1]`` for ``i = 1..len(values)`` (1-based in the maths).

    ``values`` has shape ``(m,)`` for scalar paths and ``(m, d, d)`` otherwise.
    ``kbar`` holds the normalizers ``Kbar(t_i)`` (all ones for JR).
    """

    grid: TimeGrid
    k_n: int
    values: np.ndarray
    kbar: np.ndarray
    kernel_id: str
    truncation: TruncationRule = NO_TRUNCATION
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def delta(self) -> float:
        return self.grid.delta

    @property
    def n(self) -> int:
        return self.grid.n_steps

    def __len__(self) -> int:
        return len(self.values)

    @property
    def kernel(self) -> KernelSpec:
        """The kernel object (resolved by name when not kept in ``meta``)."""
        return self.meta.get("kernel") or get_kernel(self.kernel_id)


def _increments(path: SamplePath) -> np.ndarray:
    dx = path.increments
    bad = ~np.isfinite(dx)
    if dx.ndim > 1:
        bad = bad.any(axis=tuple(range(1, dx.ndim)))
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0]) + 1
        raise DataError(f"non-finite increment at index j = {j}")
    return dx


def _squared(dx: np.ndarray, v_n: float) -> tuple[np.ndarray, np.ndarray]:
    """Truncated squared increments (outer products for d > 1) and the keep mask."""
    if dx.ndim == 1:
        keep = np.abs(dx) <= v_n
        sq = np.where(keep, dx * dx, 0.0)
    else:
        keep = np.linalg.norm(dx, axis=1) <= v_n
        sq = np.einsum("jp,jq->jpq", dx, dx) * keep[:, None, None]
    return sq, keep


def _window_sums(a: np.ndarray, lo, hi) -> np.ndarray:
    """``sum_{p=lo}^{hi} a[p]`` along axis 0 for index arrays ``lo``, ``hi`` (clipped)."""
    n = a.shape[0]
    csum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
    lo = np.clip(lo, 0, n)
    hi = np.clip(np.asarray(hi) + 1, lo, n)
    return csum[hi] - csum[lo]


def _kernel_filter(kernel: KernelSpec, a: np.ndarray, k_n: int) -> np.ndarray:
    """``sum_{j=1}^n K((j-1-i)/k_n) a_j`` for ``i = 1..n`` along axis 0."""
    n = a.shape[0]
    lo, hi = kernel.support
    m_lo = max(-n, int(math.floor(lo * k_n))) if math.isfinite(lo) else -n
    m_hi = min(n - 1, int(math.ceil(hi * k_n))) if math.isfinite(hi) else n - 1
    m = np.arange(m_lo, m_hi + 1)
    w = np.asarray(kernel(m / k_n), dtype=float)
    i = np.arange(1, n + 1)

    nz = np.flatnonzero(w)
    if nz.size and np.all(w[nz] == w[nz[0]]) and nz[-1] - nz[0] + 1 == nz.size:
        # box kernel: plain moving sums, shared with the forward-window estimator
        sums = _window_sums(a, i + m[nz[0]], i + m[nz[-1]])
        return sums if w[nz[0]] == 1.0 else w[nz[0]] * sums

    flat = a.reshape(n, -1)
    wr = w[::-1]
    if kernel.bounded_support or w.size * n <= _DIRECT_LIMIT:
        full = np.stack([np.convolve(flat[:, c], wr) for c in range(flat.shape[1])], axis=1)
    else:
        full = fftconvolve(flat, wr[:, None], axes=0)
    # full[s] = sum_p a[p] K((m_hi - s + p)/k_n) with p = j - 1, so offset p - i needs s = i + m_hi
    s = i + m_hi
    out = np.zeros_like(flat, dtype=float)
    valid = (s >= 0) & (s < full.shape[0])
    out[valid] = full[s[valid]]
    return out.reshape(a.shape)


def nw_spot_vol(
    path: SamplePath,
    kernel: KernelSpec | str,
    k_n: int,
    trunc: TruncationRule = NO_TRUNCATION,
) -> SpotVolSeries:
    """Kernel-weighted spot variance, optionally truncated, at every ``t_i``, ``i = 1..n``.

    ``c_hat_i = sum_j K_b(t_{j-1} - t_i) dX_j dX_j^T 1{|dX_j| <= v_n} / Kbar(t_i) / delta``.
    """
    kernel = get_kernel(kernel)
    grid = path.grid
    n = grid.n_steps
    if int(k_n) != k_n or k_n < 2:
        raise ConfigError(f"k_n must be an integer >= 2, got {k_n}")
    if k_n >= n:
        raise ConfigError(f"invalid bandwidth: k_n = {k_n} must be smaller than n = {n}")
    k_n = int(k_n)
    dx = _increments(path)
    v_n = truncation_level(trunc, grid.delta)
    sq, keep = _squared(dx, v_n)

    raw = _kernel_filter(kernel, sq, k_n)  # sum_j K((j-1-i)/k_n) sq_j
    kb = kbar_all(kernel, n, k_n)
    # a one-sided kernel puts no mass on the grid near one edge (Kbar = 0);
    # those points get zero weight downstream and carry the nearest value
    empty = kb <= 0.0
    safe = k_n * np.where(empty, 1.0, kb) * grid.delta
    if sq.ndim == 1:
        values = np.maximum(raw / safe, 0.0)
    else:
        values = raw / safe[:, None, None]
        values = 0.5 * (values + np.swapaxes(values, -1, -2))
    if np.all(empty):
        raise ConfigError("kernel puts no mass on the observation grid")
    if np.any(empty):
        live = np.flatnonzero(~empty)
        dst = np.flatnonzero(empty)
        pos = np.searchsorted(live, dst)
        nxt = live[np.clip(pos, 0, live.size - 1)]
        prv = live[np.clip(pos - 1, 0, live.size - 1)]
        values[dst] = values[np.where(np.abs(nxt - dst) <= np.abs(prv - dst), nxt, prv)]

    # windows whose kernel mass only meets truncated increments
    mass = _kernel_filter(kernel, keep.astype(float), k_n) / k_n
    degenerate = int(np.sum((mass <= 1e-15 * kb) & ~empty))
    meta = {
        "truncated": int(np.sum(~keep)),
        "degenerate_windows": degenerate,
        "empty_windows": int(np.sum(empty)),
        "kernel": kernel,
    }
    return SpotVolSeries(grid, k_n, values, kb, kernel.name, trunc, meta)


def jr_spot_vol(
    path: SamplePath,
    k_n: int,
    trunc: TruncationRule = NO_TRUNCATION,
) -> SpotVolSeries:
    """Forward rolling-window estimator on ``i = 1..n-k_n+1``.

    ``c_hat_i = (1 / (k_n delta)) sum_{j=0}^{k_n-1} dX_{i+j} dX_{i+j}^T 1{|dX_{i+j}| <= v_n}``.
    """
    grid = path.grid
    n = grid.n_steps
    if int(k_n) != k_n or k_n < 1:
        raise ConfigError(f"k_n must be a positive integer, got {k_n}")
    if k_n >= n:
        raise ConfigError(f"invalid bandwidth: k_n = {k_n} must be smaller than n = {n}")
    k_n = int(k_n)
    dx = _increments(path)
    v_n = truncation_level(trunc, grid.delta)
    sq, keep = _squared(dx, v_n)
    m = n - k_n + 1
    i = np.arange(1, m + 1)
    # increments j = i..i+k_n-1 sit at 0-based positions i-1..i+k_n-2
    window = _window_sums(sq, i - 1, i + k_n - 2)
    values = window / (k_n * grid.delta)
    if values.ndim == 1:
        values = np.maximum(values, 0.0)
    kept = np.concatenate([[0], np.cumsum(keep)])
    degenerate = int(np.sum((kept[i + k_n - 1] - kept[i - 1]) == 0))
    meta = {"truncated": int(np.sum(~keep)), "degenerate_windows": degenerate}
    return SpotVolSeries(grid, k_n, values, np.ones(m), "JR", trunc, meta)


def k_from_theta(theta: float, delta: float) -> int:
    """Window length ``k_n = max(2, round(theta / sqrt(delta)))``."""
    if not theta > 0:
        raise ConfigError(f"theta must be positive, got {theta}")
    return max(2, int(round(theta / math.sqrt(delta))))
