"""Experiment configuration: JSON documents validated against a schema."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from ivfunc.errors import ConfigError
from ivfunc.estimators import EstimatorConfig, JackknifeConfig, jackknife_weights
from ivfunc.functionals import get_functional
from ivfunc.kernels import get_kernel
from ivfunc.sde_sim import ExpOUConfig, JumpConfig, TimeGrid, make_grid
from ivfunc.spotvol import NO_TRUNCATION, TruncationRule

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grids", "estimators", "functionals", "n_paths", "master_seed"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mean_level": _NUM,
                "mean_reversion": {"type": "number", "minimum": 0},
                "vol_of_factor": {"type": "number", "minimum": 0},
                "leverage_rho": {"type": "number", "minimum": -1, "maximum": 1},
                "initial_factor": {"oneOf": [_NUM, {"const": "stationary"}]},
                "refinement": {"type": "integer", "minimum": 1},
            },
        },
        "jumps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "intensity": {"type": "number", "minimum": 0},
                "law": {"enum": ["none", "gaussian", "two-point"]},
                "mu": _NUM,
                "sigma": {"type": "number", "minimum": 0},
                "size": _NUM,
            },
        },
        "grids": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["horizon_days", "samples_per_day"],
                "properties": {
                    "horizon_days": _POS,
                    "samples_per_day": {"type": "integer", "minimum": 1},
                    "hours_per_day": _POS,
                    "days_per_unit": _POS,
                },
            },
        },
        "estimators": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "kind": {
                        "enum": ["plugin", "corrected", "undersmoothed", "jr", "jr_corrected", "jackknife"]
                    },
                    "kernel": {"type": "string"},
                    "theta": {"oneOf": [_POS, {"const": "auto"}]},
                    "k_n": {"type": "integer", "minimum": 1},
                    "constant_mode": {"enum": ["asymptotic", "finite-sample"]},
                    "truncation": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "alpha": {"oneOf": [_POS, {"const": "inf"}]},
                            "varpi": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                        },
                    },
                    "windows": {
                        "oneOf": [
                            {"$ref": "#/$defs/windows"},
                            {
                                "type": "object",
                                "patternProperties": {"^[0-9]+$": {"$ref": "#/$defs/windows"}},
                                "additionalProperties": False,
                                "minProperties": 1,
                            },
                        ]
                    },
                    "weights": {
                        "type": "array",
                        "minItems": 2,
                        "maxItems": 3,
                        "items": {"oneOf": [_NUM, {"type": "string", "pattern": "^-?[0-9]+(/[0-9]+)?$"}]},
                    },
                    "boundary_adjust": {"type": "boolean"},
                },
            },
        },
        "functionals": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "n_paths": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
        "sweep": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "init_theta": _POS,
        "z_diagnostics": {"type": "boolean"},
    },
    "$defs": {
        "windows": {
            "type": "array",
            "minItems": 2,
            "maxItems": 3,
            "items": {"type": "integer", "minimum": 1},
        }
    },
}


@dataclass(frozen=True)
class GridSpec:
    horizon_days: float
    samples_per_day: int
    hours_per_day: float = 6.5
    days_per_unit: float = 1.0

    def build(self) -> TimeGrid:
        return make_grid(self.horizon_days, self.samples_per_day, self.hours_per_day, self.days_per_unit)

    @property
    def label(self) -> str:
        return self.build().label


@dataclass(frozen=True)
class EstimatorSpec:
    """One configured estimator; ``theta = "auto"`` selects the bandwidth per path."""

    kind: str
    name: str = ""
    kernel: str = "exp"
    theta: float | str | None = None
    k_n: int | None = None
    constant_mode: str = "finite-sample"
    truncation: TruncationRule = NO_TRUNCATION
    windows: tuple | dict | None = None  # jackknife: list, or {samples_per_day: list}
    weights: tuple | None = None
    boundary_adjust: bool = False

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", self.default_name())
        if self.kind == "jackknife":
            if self.windows is None:
                raise ConfigError(f"estimator {self.name!r}: jackknife needs windows")
            for spd in self._window_table():
                self.jackknife_for(spd)
            return
        if self.theta is None and self.k_n is None:
            raise ConfigError(f"estimator {self.name!r}: set theta (number or 'auto') or k_n")
        if self.theta is not None and self.k_n is not None:
            raise ConfigError(f"estimator {self.name!r}: theta and k_n are mutually exclusive")
        if self.kind not in ("jr", "jr_corrected"):
            get_kernel(self.kernel)

    def default_name(self) -> str:
        if self.kind == "jackknife":
            return "TS'" if self.boundary_adjust else "jackknife"
        if self.kind in ("jr", "jr_corrected"):
            return self.kind
        return f"{self.kind}-{self.kernel}"

    @property
    def kernel_label(self) -> str:
        return "unifR" if self.kind in ("jr", "jr_corrected", "jackknife") else self.kernel

    @property
    def auto(self) -> bool:
        return self.theta == "auto"

    def _window_table(self) -> dict:
        if isinstance(self.windows, dict):
            return {int(k): tuple(v) for k, v in self.windows.items()}
        return {None: tuple(self.windows)}

    def jackknife_for(self, samples_per_day: int | None) -> JackknifeConfig:
        table = self._window_table()
        if None in table:
            windows = table[None]
        elif samples_per_day in table:
            windows = table[samples_per_day]
        else:
            raise ConfigError(
                f"estimator {self.name!r}: no jackknife windows for {samples_per_day} samples per day"
            )
        weights = self.weights if self.weights is not None else jackknife_weights(windows)
        return JackknifeConfig(tuple(windows), tuple(weights), self.boundary_adjust)

    def estimator_config(self, samples_per_day: int | None = None, theta: float | None = None,
                         k_n: int | None = None) -> EstimatorConfig:
        """Concrete :class:`EstimatorConfig`; ``theta``/``k_n`` override the stored values."""
        if self.kind == "jackknife":
            return EstimatorConfig(
                kernel_id="unifR", truncation=self.truncation, estimator_kind="jackknife",
                jackknife=self.jackknife_for(samples_per_day),
            )
        if theta is None and k_n is None:
            theta = None if self.auto else self.theta
            k_n = self.k_n
        if theta is None and k_n is None:
            raise ConfigError(f"estimator {self.name!r}: bandwidth not resolved")
        return EstimatorConfig(
            kernel_id=self.kernel if self.kind not in ("jr", "jr_corrected") else "unifR",
            theta=theta, k_n=k_n, truncation=self.truncation,
            constant_mode=self.constant_mode, estimator_kind=self.kind,
        )

    def with_window(self, k: int) -> "EstimatorSpec":
        """Copy at a fixed window; jackknife entries get ``(ceil(k/2), k, ceil(3k/2))``."""
        if self.kind == "jackknife":
            if len(next(iter(self._window_table().values()))) == 2:
                windows = (k, 2 * k)
            else:
                windows = (math.ceil(k / 2), k, math.ceil(3 * k / 2))
            return replace(self, windows=windows, weights=None)
        return replace(self, theta=None, k_n=int(k))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind != "jackknife":
            out["kernel"] = self.kernel
            if self.theta is not None:
                out["theta"] = self.theta
            if self.k_n is not None:
                out["k_n"] = self.k_n
            out["constant_mode"] = self.constant_mode
        else:
            tab = self._window_table()
            out["windows"] = list(tab[None]) if None in tab else {str(k): list(v) for k, v in tab.items()}
            if self.weights is not None:
                out["weights"] = [str(w) for w in self.jackknife_for(next(iter(tab))).weights]
            out["boundary_adjust"] = self.boundary_adjust
        if self.truncation.active:
            out["truncation"] = {"alpha": self.truncation.alpha, "varpi": self.truncation.varpi}
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    grids: tuple[GridSpec, ...]
    estimators: tuple[EstimatorSpec, ...]
    functionals: tuple[str, ...]
    n_paths: int
    master_seed: int
    model: ExpOUConfig = field(default_factory=ExpOUConfig)
    jumps: JumpConfig = field(default_factory=JumpConfig)
    output_dir: str | None = None
    sweep: tuple[int, ...] | None = None
    init_theta: float = 0.2
    z_diagnostics: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        if not self.functionals:
            raise ConfigError("at least one functional is required")
        for name in self.functionals:
            get_functional(name)
        names = [e.name for e in self.estimators]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ConfigError(f"duplicate estimator names: {sorted(dup)}")

    def to_dict(self) -> dict:
        model = asdict(self.model)
        out = {
            "model": model,
            "jumps": asdict(self.jumps),
            "grids": [asdict(g) for g in self.grids],
            "estimators": [e.to_dict() for e in self.estimators],
            "functionals": list(self.functionals),
            "n_paths": self.n_paths,
            "master_seed": self.master_seed,
            "init_theta": self.init_theta,
            "z_diagnostics": self.z_diagnostics,
        }
        if self.sweep is not None:
            out["sweep"] = list(self.sweep)
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (output directory excluded)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _path_of(err: jsonschema.ValidationError) -> str:
    parts = ["$"]
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts)


def _truncation(d: dict | None) -> TruncationRule:
    if not d:
        return NO_TRUNCATION
    alpha = d.get("alpha", "inf")
    alpha = math.inf if alpha == "inf" else float(alpha)
    return TruncationRule(alpha, float(d.get("varpi", 0.49)))


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate ``doc`` against :data:`SCHEMA` and build an :class:`ExperimentConfig`.

    Errors carry a JSON path such as ``$.estimators[2].theta``.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_path_of(e)}: {e.message}")
    try:
        model = ExpOUConfig(**doc.get("model", {}))
        jumps = JumpConfig(**doc.get("jumps", {}))
        grids = tuple(GridSpec(**g) for g in doc["grids"])
        for g in grids:
            g.build()
        ests = []
        for idx, e in enumerate(doc["estimators"]):
            try:
                e = dict(e)
                trunc = _truncation(e.pop("truncation", None))
                windows = e.pop("windows", None)
                if isinstance(windows, list):
                    windows = tuple(windows)
                weights = e.pop("weights", None)
                ests.append(EstimatorSpec(
                    truncation=trunc, windows=windows,
                    weights=tuple(weights) if weights is not None else None, **e,
                ))
            except ConfigError as exc:
                raise ConfigError(f"config error at $.estimators[{idx}]: {exc}") from exc
        return ExperimentConfig(
            grids=grids,
            estimators=tuple(ests),
            functionals=tuple(doc["functionals"]),
            n_paths=int(doc["n_paths"]),
            master_seed=int(doc["master_seed"]),
            model=model,
            jumps=jumps,
            output_dir=doc.get("output_dir"),
            sweep=tuple(doc["sweep"]) if "sweep" in doc else None,
            init_theta=float(doc.get("init_theta", 0.2)),
            z_diagnostics=bool(doc.get("z_diagnostics", False)),
        )
    except TypeError as exc:
        raise ConfigError(f"config error: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# Presets for the simulation study (trading-year time units)

_STUDY_GRIDS = [
    {"horizon_days": 5, "samples_per_day": 78, "days_per_unit": 252},
    {"horizon_days": 5, "samples_per_day": 390, "days_per_unit": 252},
]
_JK_WINDOWS = {"78": [15, 30, 45], "390": [40, 80, 120]}
_JK2_WINDOWS = {"78": [15, 30], "390": [40, 80]}


def study_estimators() -> list[dict]:
    out = []
    for kern in ("exp", "unif2", "unifR"):
        out.append({"name": f"V-{kern}", "kind": "plugin", "kernel": kern, "theta": "auto"})
        out.append({"name": f"Vtilde-{kern}", "kind": "corrected", "kernel": kern, "theta": "auto"})
    out += [
        {"name": "V-JR", "kind": "jr", "kernel": "unifR", "theta": "auto"},
        {"name": "Vtilde-JR", "kind": "jr_corrected", "kernel": "unifR", "theta": "auto"},
        {"name": "TS", "kind": "jackknife", "windows": _JK2_WINDOWS, "weights": [-1, 2]},
        {"name": "TS'", "kind": "jackknife", "windows": _JK2_WINDOWS, "weights": [-1, 2],
         "boundary_adjust": True},
        {"name": "MS", "kind": "jackknife", "windows": _JK_WINDOWS, "weights": ["-5/2", 8, "-9/2"]},
    ]
    return out


def preset(name: str, n_paths: int = 1000, master_seed: int = 20240101) -> dict:
    """Config documents for ``table1`` (g = c^2), ``table2`` (g = log) and ``fig4`` (sweep)."""
    if name in ("table1", "table2"):
        return {
            "grids": _STUDY_GRIDS,
            "estimators": study_estimators(),
            "functionals": ["square" if name == "table1" else "log"],
            "n_paths": n_paths,
            "master_seed": master_seed,
        }
    if name == "fig4":
        return {
            "grids": [_STUDY_GRIDS[0]],
            "estimators": [
                {"name": "Vtilde-exp", "kind": "corrected", "kernel": "exp", "k_n": 30},
                {"name": "MS", "kind": "jackknife", "windows": [15, 30, 45]},
            ],
            "functionals": ["square"],
            "n_paths": n_paths,
            "master_seed": master_seed,
            "sweep": list(range(10, 61, 5)),
        }
    raise ConfigError(f"unknown preset {name!r}; expected table1, table2 or fig4")
