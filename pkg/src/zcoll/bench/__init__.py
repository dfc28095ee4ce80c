"""Benchmark harness: data, sweeps and reports."""
from .data import Distribution, gen_data, ingest_f32, write_f32
from .experiment import (ExperimentSpec, QuantSpec, ReportRow, build_plan, bus_factor,
                         default_net, run_experiment, run_size)
from .report import COLUMNS, emit_report, markdown_table, read_report

__all__ = ["COLUMNS", "Distribution", "ExperimentSpec", "QuantSpec", "ReportRow", "build_plan",
           "bus_factor", "default_net", "emit_report", "gen_data", "ingest_f32",
           "markdown_table", "read_report", "run_experiment", "run_size", "write_f32"]
