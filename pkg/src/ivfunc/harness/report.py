"""CSV and JSON serialization of experiment reports.

Emitted files depend only on the report contents: wall time is kept in memory
but not written, so repeated runs with one seed give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict
from pathlib import Path

from ivfunc.errors import ConfigError, IvfuncError
from ivfunc.harness.mc import ExperimentReport, ReportCell

CSV_HEADER = ("grid", "estimator", "kernel", "functional", "bias_pct", "rmse_pct", "n_paths", "seed")
SWEEP_HEADER = ("grid", "k_n", "estimator", "kernel", "functional", "bias_pct", "rmse_pct", "n_paths", "seed")
OUTPUT_ENV = "IVFUNC_OUTPUT_DIR"


def _num(x: float) -> str:
    return repr(float(x))


def report_to_csv(report: ExperimentReport, sweep: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = SWEEP_HEADER if sweep else CSV_HEADER
    w.writerow(header)
    for c in report.cells:
        row = [c.grid, c.estimator, c.kernel, c.functional, _num(c.bias_pct), _num(c.rmse_pct),
               c.n_paths, report.seed]
        if sweep:
            row.insert(1, c.k_n)
        w.writerow(row)
    return buf.getvalue()


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "provenance": {
            "seed": report.seed,
            "config_digest": report.config_digest,
            "version": report.version,
        },
        "cells": [asdict(c) for c in report.cells],
    }


def report_to_json(report: ExperimentReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True, allow_nan=True) + "\n"


def report_from_json(text: str) -> ExperimentReport:
    doc = json.loads(text)
    prov = doc["provenance"]
    cells = tuple(ReportCell(**c) for c in doc["cells"])
    return ExperimentReport(cells, prov["seed"], prov["config_digest"], prov["version"])


def output_dir(explicit: str | os.PathLike | None = None) -> Path:
    """``explicit`` if given, else ``$IVFUNC_OUTPUT_DIR``, else the working directory."""
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ENV) or ".")


def emit_report(
    report: ExperimentReport,
    fmt: str = "csv",
    directory: str | os.PathLike | None = None,
    stem: str = "report",
    sweep: bool = False,
) -> Path:
    """Write ``<directory>/<stem>.<fmt>`` and return its path."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}; expected csv or json")
    if not report.cells:
        raise ConfigError("report has no cells")
    text = report_to_csv(report, sweep) if fmt == "csv" else report_to_json(report)
    out = output_dir(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        target = out / f"{stem}.{fmt}"
        target.write_text(text)
    except OSError as exc:
        raise IvfuncError(f"cannot write report to {out}: {exc}") from exc
    return target
