"""Seeded, parallel Monte Carlo over simulated exp-OU paths."""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from ivfunc import __version__
from ivfunc.bandwidth import select_theta
from ivfunc.errors import ConfigError, IvfuncError
from ivfunc.estimators import a_hat_3, corrected_from_spot, estimate, v_plugin
from ivfunc.functionals import get_functional
from ivfunc.harness.config import EstimatorSpec, ExperimentConfig, GridSpec
from ivfunc.inference import a_hat_3_limit, avar, bias_oracle, normality_report, standardize
from ivfunc.kernels import compute_constants, get_kernel
from ivfunc.sde_sim import ExpOUConfig, JumpConfig, SamplePath, path_seed, simulate_expou
from ivfunc.spotvol import k_from_theta, nw_spot_vol

FAIL_FLAG_FRACTION = 0.01


@dataclass(frozen=True)
class ReportCell:
    grid: str
    estimator: str
    kernel: str
    functional: str
    bias_pct: float
    rmse_pct: float
    n_paths: int
    n_failed: int = 0
    flagged: bool = False
    k_n: int | None = None
    z: dict | None = None


@dataclass(frozen=True)
class ExperimentReport:
    cells: tuple[ReportCell, ...]
    seed: int
    config_digest: str
    version: str = __version__
    wall_time: float = field(default=0.0, compare=False)

    def cell(self, estimator: str, functional: str | None = None, grid: str | None = None) -> ReportCell:
        for c in self.cells:
            if c.estimator == estimator and functional in (None, c.functional) and grid in (None, c.grid):
                return c
        raise KeyError((estimator, functional, grid))


def truth_value(path: SamplePath, g) -> float:
    """Left-endpoint Riemann sum of ``g(c)`` on the truth channel."""
    g = get_functional(g)
    c = path.truth.c_path[:-1]
    return path.grid.delta * math.fsum(np.asarray(g.g(c), dtype=float))


def _evaluate(path: SamplePath, edef: EstimatorSpec, g, samples_per_day: int, init_theta: float):
    """Estimate and the window it used (``None`` for jackknife)."""
    if edef.kind == "jackknife":
        cfg = edef.estimator_config(samples_per_day)
        return estimate(path, cfg, g), None
    if edef.auto:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sel = select_theta(path, edef.kernel_label, g, init_theta, edef.truncation)
        cfg = edef.estimator_config(samples_per_day, k_n=sel.k_n)
    else:
        cfg = edef.estimator_config(samples_per_day)
    return estimate(path, cfg, g), cfg.window(path.grid.delta)


def _one_path(idx: int, cfg: ExperimentConfig, grid_index: int, defs: tuple[EstimatorSpec, ...]):
    """Relative errors (and z-values) of every estimator x functional on path ``idx``."""
    gdef = cfg.grids[grid_index]
    grid = gdef.build()
    path = simulate_expou(cfg.model, cfg.jumps, grid, path_seed(cfg.master_seed, idx, grid_index))
    out = {}
    for fname in cfg.functionals:
        g = get_functional(fname)
        try:
            truth = truth_value(path, g)
        except IvfuncError:
            truth = float("nan")
        av = None
        for edef in defs:
            rel, z, k = float("nan"), float("nan"), None
            try:
                with np.errstate(over="raise", divide="raise", invalid="raise"):
                    est, k = _evaluate(path, edef, g, gdef.samples_per_day, cfg.init_theta)
                    rel = (est - truth) / truth
                    if cfg.z_diagnostics:
                        if av is None:
                            av = avar(path.truth, g, grid.delta)
                        oracle = None
                        if edef.kind == "plugin" and k is not None:
                            oracle = bias_oracle(
                                path.truth, compute_constants(get_kernel(edef.kernel)),
                                k * math.sqrt(grid.delta), g, grid.delta,
                            )
                        z = standardize(est, truth, oracle, av, grid.delta)
            except (IvfuncError, FloatingPointError, ZeroDivisionError):
                rel = float("nan")
            if not math.isfinite(rel):
                rel = float("nan")
            out[(edef.name, fname)] = (rel, z, k)
    return out


def _map_paths(fn, n_paths: int, workers: int | None):
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or n_paths == 1:
        return [fn(i) for i in range(n_paths)]
    chunk = max(1, n_paths // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n_paths), chunksize=chunk))


def default_workers() -> int:
    env = os.environ.get("IVFUNC_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _aggregate(values: list[float]) -> tuple[float, float, int, int]:
    ok = [v for v in values if math.isfinite(v)]
    failed = len(values) - len(ok)
    if not ok:
        return float("nan"), float("nan"), 0, failed
    m = len(ok)
    bias = 100.0 * math.fsum(ok) / m
    rmse = 100.0 * math.sqrt(math.fsum(v * v for v in ok) / m)
    return bias, rmse, m, failed


def _cells_for_grid(cfg, gi, defs, results, k_override=None) -> list[ReportCell]:
    label = cfg.grids[gi].label
    cells = []
    for edef in defs:
        for fname in cfg.functionals:
            triples = [r[(edef.name, fname)] for r in results]
            bias, rmse, m, failed = _aggregate([t[0] for t in triples])
            zdiag = None
            if cfg.z_diagnostics:
                zs = [t[1] for t in triples if math.isfinite(t[1])]
                if len(zs) >= 30:
                    rep = normality_report(zs)
                    zdiag = {"mean": rep.mean, "sd": rep.sd, "ks_distance": rep.ks_distance}
            ks = [t[2] for t in triples if t[2] is not None]
            k_med = int(np.median(ks)) if ks else None
            cells.append(ReportCell(
                grid=label, estimator=edef.name, kernel=edef.kernel_label, functional=fname,
                bias_pct=bias, rmse_pct=rmse, n_paths=m, n_failed=failed,
                flagged=failed > FAIL_FLAG_FRACTION * len(triples) or m == 0,
                k_n=k_override if k_override is not None else k_med, z=zdiag,
            ))
    return cells


def run_mc(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Evaluate every configured estimator on ``cfg.n_paths`` paths per grid.

    Paths are keyed by ``(master_seed, grid index, path index)`` so results do
    not depend on the worker count or on which estimators are configured.
    Per-path failures are counted; a cell is flagged when more than 1% fail.
    """
    start = time.perf_counter()
    cells: list[ReportCell] = []
    for gi in range(len(cfg.grids)):
        fn = partial(_one_path, cfg=cfg, grid_index=gi, defs=cfg.estimators)
        results = _map_paths(fn, cfg.n_paths, workers)
        cells += _cells_for_grid(cfg, gi, cfg.estimators, results)
    return ExperimentReport(tuple(cells), cfg.master_seed, cfg.digest(),
                            wall_time=time.perf_counter() - start)


def sweep_bandwidth(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """RMSE of every estimator across the window list ``cfg.sweep``.

    Kernel estimators run at ``k_n = k``; jackknife estimators use the windows
    ``(ceil(k/2), k, ceil(3k/2))`` (or ``(k, 2k)`` for two scales) with weights
    solved from the identities. Each cell records its ``k_n``.
    """
    if not cfg.sweep:
        raise ConfigError("sweep_bandwidth needs a non-empty sweep list")
    start = time.perf_counter()
    cells: list[ReportCell] = []
    for gi in range(len(cfg.grids)):
        defs_by_k = {k: tuple(s.with_window(k) for s in cfg.estimators) for k in cfg.sweep}
        flat = tuple(
            EstimatorSpec(**{**_entry_kwargs(s), "name": f"{s.name}@{k}"})
            for k in cfg.sweep for s in defs_by_k[k]
        )
        fn = partial(_one_path, cfg=cfg, grid_index=gi, defs=flat)
        results = _map_paths(fn, cfg.n_paths, workers)
        for k in cfg.sweep:
            sub = tuple(s for s in flat if s.name.endswith(f"@{k}"))
            for cell in _cells_for_grid(cfg, gi, sub, results, k_override=k):
                cells.append(replace(cell, estimator=cell.estimator.rsplit("@", 1)[0]))
    return ExperimentReport(tuple(cells), cfg.master_seed, cfg.digest(),
                            wall_time=time.perf_counter() - start)


def _entry_kwargs(s: EstimatorSpec) -> dict:
    return {f: getattr(s, f) for f in s.__dataclass_fields__}


@dataclass(frozen=True)
class CLTResult:
    """Standardized errors of the plug-in (oracle-centred) and corrected estimators."""

    z_plugin: np.ndarray
    z_corrected: np.ndarray
    a_hat: np.ndarray
    a_limit: np.ndarray
    k_n: int
    n_failed: int


def _clt_path(idx, grid_def, model, kernel, g, theta, seed):
    grid = grid_def.build()
    path = simulate_expou(model, JumpConfig(), grid, path_seed(seed, idx))
    d = grid.delta
    k = k_from_theta(theta, d)
    consts = compute_constants(get_kernel(kernel))
    try:
        spot = nw_spot_vol(path, kernel, k)
        truth = truth_value(path, g)
        av = avar(path.truth, g, d)
        oracle = bias_oracle(path.truth, consts, k * math.sqrt(d), g, d)
        zp = standardize(v_plugin(spot, g), truth, oracle, av, d)
        zc = standardize(corrected_from_spot(spot, g), truth, None, av, d)
        ah = a_hat_3(spot, g)
        al = a_hat_3_limit(path.truth, consts, k, g, d)
    except IvfuncError:
        return (math.nan,) * 4 + (k,)
    return zp, zc, ah, al, k


def clt_check(
    n_paths: int = 500,
    horizon_days: float = 1.0,
    samples_per_day: int = 23400,
    theta: float = 0.2,
    kernel: str = "exp",
    functional: str = "square",
    master_seed: int = 20240102,
    model: ExpOUConfig | None = None,
    days_per_unit: float = 252.0,
    workers: int | None = None,
) -> CLTResult:
    """Standardized errors across simulated paths at a fixed ``theta``."""
    if n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    gdef = GridSpec(horizon_days, samples_per_day, days_per_unit=days_per_unit)
    fn = partial(_clt_path, grid_def=gdef, model=model or ExpOUConfig(), kernel=kernel,
                 g=functional, theta=theta, seed=master_seed)
    rows = np.array(_map_paths(fn, n_paths, workers), dtype=float)
    ok = np.all(np.isfinite(rows[:, :4]), axis=1)
    r = rows[ok]
    return CLTResult(r[:, 0], r[:, 1], r[:, 2], r[:, 3], int(rows[0, 4]), int(np.sum(~ok)))
