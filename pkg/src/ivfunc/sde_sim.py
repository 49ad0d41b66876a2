"""Sample paths of the exp-OU stochastic volatility model with leverage.

The log-price follows ``dX = sigma dW`` with ``sigma = exp(m + F)`` and
``dF = -kappa F dt + nu dB``, ``corr(dW, dB) = rho``. Optional compound-Poisson
jumps are added to ``X``. Paths expose both the observations and the latent
truth (spot variance ``c = sigma**2`` and the diffusion coefficient of ``c``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.signal import lfilter

from ivfunc.errors import ConfigError, NumericError

TRADING_DAYS_PER_YEAR = 252.0


@dataclass(frozen=True)
class TimeGrid:
    """Regular observation grid ``t_i = i * delta``, ``i = 0..n_steps``.

    ``horizon`` is expressed in the model's time unit (days by default, or
    trading years when the grid was built with ``days_per_unit=252``).
    """

    horizon: float
    n_steps: int
    label: str = ""

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ConfigError(f"grid horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError(f"grid n_steps must be a positive integer, got {self.n_steps}")

    @property
    def delta(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.delta


def make_grid(
    horizon_days: float,
    samples_per_day: int,
    hours_per_day: float = 6.5,
    days_per_unit: float = 1.0,
) -> TimeGrid:
    """Build an intraday sampling grid.

    ``n_steps = horizon_days * samples_per_day``. Time is measured in units of
    ``days_per_unit`` trading days: the default 1 gives day units, 252 gives
    trading years (the unit the exp-OU parameters of the simulation study are
    quoted in). ``hours_per_day`` only enters the grid label.
    """
    for name, value in [
        ("horizon_days", horizon_days),
        ("samples_per_day", samples_per_day),
        ("hours_per_day", hours_per_day),
        ("days_per_unit", days_per_unit),
    ]:
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    n_float = horizon_days * samples_per_day
    n_steps = int(round(n_float))
    if abs(n_float - n_steps) > 1e-9 or n_steps < 1:
        raise ConfigError(
            f"horizon_days * samples_per_day must be a positive integer, got {n_float}"
        )
    minutes = hours_per_day * 60.0 / samples_per_day
    label = f"T={horizon_days:g}d,dt={minutes:g}min"
    return TimeGrid(horizon=horizon_days / days_per_unit, n_steps=n_steps, label=label)


@dataclass(frozen=True)
class ExpOUConfig:
    mean_level: float = -1.6
    mean_reversion: float = 5.0
    vol_of_factor: float = 2.0
    leverage_rho: float = -0.75
    initial_factor: float | Literal["stationary"] = "stationary"
    refinement: int = 1

    def __post_init__(self):
        if not -1.0 <= self.leverage_rho <= 1.0:
            raise ConfigError(f"leverage_rho must lie in [-1, 1], got {self.leverage_rho}")
        if self.mean_reversion < 0:
            raise ConfigError(f"mean_reversion must be >= 0, got {self.mean_reversion}")
        if self.vol_of_factor < 0:
            raise ConfigError(f"vol_of_factor must be >= 0, got {self.vol_of_factor}")
        if int(self.refinement) != self.refinement or self.refinement < 1:
            raise ConfigError(f"refinement must be a positive integer, got {self.refinement}")
        if self.initial_factor == "stationary":
            if self.mean_reversion == 0 and self.vol_of_factor > 0:
                raise ConfigError("stationary initial draw needs mean_reversion > 0")
        elif not isinstance(self.initial_factor, (int, float)):
            raise ConfigError(
                f"initial_factor must be a number or 'stationary', got {self.initial_factor!r}"
            )

    @property
    def stationary_variance(self) -> float:
        if self.vol_of_factor == 0:
            return 0.0
        return self.vol_of_factor**2 / (2.0 * self.mean_reversion)


@dataclass(frozen=True)
class JumpConfig:
    """Compound-Poisson jumps in the log-price (finite activity only)."""

    intensity: float = 0.0
    law: Literal["none", "gaussian", "two-point"] = "none"
    mu: float = 0.0
    sigma: float = 0.0
    size: float = 0.0

    def __post_init__(self):
        if self.intensity < 0:
            raise ConfigError(f"jump intensity must be >= 0, got {self.intensity}")
        if self.law not in ("none", "gaussian", "two-point"):
            raise ConfigError(f"unknown jump law {self.law!r}")
        if self.law == "gaussian" and self.sigma < 0:
            raise ConfigError("gaussian jump sigma must be >= 0")

    @property
    def active(self) -> bool:
        return self.intensity > 0 and self.law != "none"


@dataclass(frozen=True)
class PathTruth:
    c_path: np.ndarray
    volvol_path: np.ndarray
    jump_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class SamplePath:
    grid: TimeGrid
    x: np.ndarray
    truth: PathTruth | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape[0] != self.grid.n_steps + 1:
            raise ConfigError(
                f"path has {x.shape[0]} observations, grid expects {self.grid.n_steps + 1}"
            )
        object.__setattr__(self, "x", x)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.x, axis=0)

    @property
    def dim(self) -> int:
        return 1 if self.x.ndim == 1 else self.x.shape[1]


def path_seed(master_seed: int, path_index: int, stream: int | None = None) -> np.random.SeedSequence:
    """Seed for path ``path_index`` of an experiment keyed by ``master_seed``.

    ``stream`` separates independent families of paths (one per sampling grid).
    """
    key = (int(path_index),) if stream is None else (int(stream), int(path_index))
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def simulate_expou(
    cfg: ExpOUConfig,
    jumps: JumpConfig,
    grid: TimeGrid,
    seed: int | np.random.SeedSequence,
    x0: float = 0.0,
) -> SamplePath:
    """Euler-Maruyama path of the exp-OU model on ``grid``.

    The scheme runs on a grid ``refinement`` times finer than the observation
    grid and keeps every ``refinement``-th point. Jumps (if any) are drawn after
    the Gaussian increments, so the continuous part of a path does not depend on
    the jump configuration.
    """
    rng = _generator(seed)
    r = int(cfg.refinement)
    n_fine = grid.n_steps * r
    dt = grid.delta / r
    sqdt = np.sqrt(dt)

    dB = rng.standard_normal(n_fine) * sqdt
    dB_perp = rng.standard_normal(n_fine) * sqdt

    if cfg.initial_factor == "stationary":
        f0 = rng.standard_normal() * np.sqrt(cfg.stationary_variance)
    else:
        f0 = float(cfg.initial_factor)

    a = 1.0 - cfg.mean_reversion * dt
    factor = np.empty(n_fine + 1)
    factor[0] = f0
    factor[1:], _ = lfilter([1.0], [1.0, -a], cfg.vol_of_factor * dB, zi=[a * f0])

    rho = cfg.leverage_rho
    dW = rho * dB + np.sqrt(1.0 - rho * rho) * dB_perp
    sigma = np.exp(cfg.mean_level + factor[:-1])
    x_fine = np.empty(n_fine + 1)
    x_fine[0] = x0
    np.cumsum(sigma * dW, out=x_fine[1:])
    x_fine[1:] += x0

    x = x_fine[::r].copy()
    f_grid = factor[::r]

    jump_times: tuple[float, ...] = ()
    if jumps.active:
        count = rng.poisson(jumps.intensity * grid.horizon)
        times = np.sort(rng.uniform(0.0, grid.horizon, size=count))
        if jumps.law == "gaussian":
            sizes = rng.normal(jumps.mu, jumps.sigma, size=count)
        else:
            sizes = jumps.size * rng.choice([-1.0, 1.0], size=count)
        t = grid.times
        for tau, size in zip(times, sizes):
            x[t >= tau] += size
        jump_times = tuple(float(v) for v in times)

    c_path = np.exp(2.0 * (cfg.mean_level + f_grid))
    volvol = 2.0 * c_path * cfg.vol_of_factor
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(c_path))):
        raise NumericError("non-finite value in simulated path")
    truth = PathTruth(c_path=c_path, volvol_path=volvol, jump_times=jump_times)
    return SamplePath(grid=grid, x=x, truth=truth)
