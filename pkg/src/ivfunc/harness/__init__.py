"""Experiment driver: configuration, Monte Carlo, CSV ingestion and reports."""

from ivfunc.harness.config import (
    EstimatorSpec,
    ExperimentConfig,
    GridSpec,
    config_from_dict,
    load_config,
    preset,
)
from ivfunc.harness.ingest import ResampleRule, ingest_csv, read_path_csv, write_path_csv
from ivfunc.harness.mc import ExperimentReport, ReportCell, clt_check, run_mc, sweep_bandwidth
from ivfunc.harness.report import emit_report, report_from_json, report_to_csv, report_to_json

__all__ = [
    "EstimatorSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "GridSpec",
    "ReportCell",
    "ResampleRule",
    "clt_check",
    "config_from_dict",
    "emit_report",
    "ingest_csv",
    "load_config",
    "preset",
    "read_path_csv",
    "report_from_json",
    "report_to_csv",
    "report_to_json",
    "run_mc",
    "sweep_bandwidth",
    "write_path_csv",
]
