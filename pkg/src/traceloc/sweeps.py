"""Experiment sweeps: noise strength, trace length / dataset size, ablations.

Every sweep retrains per cell under a derived config and aggregates the
DE/LCDR buckets into one table. Cells are isolated in subdirectories and
resumable: a completed cell (matching config hash) is loaded, not re-run.
Cell failures are recorded in the aggregate instead of aborting the sweep.
"""

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

from traceloc.exceptions import TraceLocError
from traceloc.io_utils import write_json
from traceloc.losses import AblationConfig
from traceloc.pipeline import run_cell
from traceloc.runconfig import RunConfig

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
DEFAULT_M_VALUES = (5, 7, 9, 11)
DEFAULT_SIZES = (4_000, 12_000, 40_000)

ABLATION_VARIANTS = (
    ("full", AblationConfig()),
    ("recurrent_backbone", AblationConfig(backbone="recurrent")),
    ("feedforward_backbone", AblationConfig(backbone="feedforward")),
    ("no_d_encoder", AblationConfig(disable_d_encoder=True)),
    ("no_d_encoder_no_f_decoder", AblationConfig(disable_d_encoder=True, disable_f_decoder=True)),
    ("nonlinear_d_codec", AblationConfig(d_codec="nonlinear")),
)


@dataclass
class SweepReport:
    kind: str
    rows: list

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": self.rows}


def _metric_columns(row: dict) -> list:
    if "error" in row:
        return [""] * 6
    return [
        row["de"]["5"], row["de"]["10"], row["de"]["all"],
        row["lcdr"]["5"], row["lcdr"]["10"], row["lcdr"]["all"],
    ]


def write_sweep_csv(path, report: SweepReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "DE(5)", "DE(10)", "DE(all)",
                         "LCDR(5)", "LCDR(10)", "LCDR(all)", "error"])
        for row in report.rows:
            writer.writerow([row["cell"], *_metric_columns(row), row.get("error", "")])


def _finish_report(kind: str, rows, workdir) -> SweepReport:
    report = SweepReport(kind=kind, rows=rows)
    write_json(Path(workdir) / "sweep_report.json", report.to_dict())
    write_sweep_csv(Path(workdir) / "sweep_report.csv", report)
    return report


def _run_cells(kind: str, cells, workdir, cell_filter: str | None = None) -> SweepReport:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, config in cells:
        if cell_filter and cell_filter not in name:
            logger.info("cell %s filtered out", name)
            continue
        try:
            result = run_cell(config, workdir / "cells" / name)
            rows.append({"cell": name, **result})
        except TraceLocError as exc:
            logger.error("cell %s failed: %s", name, exc)
            rows.append({"cell": name, "error": str(exc)})
    return _finish_report(kind, rows, workdir)


def noise_sweep(base: RunConfig, workdir, lambdas=DEFAULT_LAMBDAS,
                cell_filter: str | None = None) -> SweepReport:
    """Rebuild and retrain per global noise scale; everything else fixed."""
    cells = []
    for lam in lambdas:
        noise = dataclasses.replace(base.noise, lam=float(lam))
        cells.append((f"lambda_{lam:g}", dataclasses.replace(base, noise=noise)))
    return _run_cells("noise", cells, workdir, cell_filter)


def size_length_sweep(base: RunConfig, workdir, m_values=DEFAULT_M_VALUES,
                      sizes=DEFAULT_SIZES, cell_filter: str | None = None) -> SweepReport:
    """Vary trace length at the base size, then size at the base length.

    Emits one row per table entry; the row at (base m, base size) appears in
    both halves of the table but is trained only once.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    row_specs = [(f"m_{m}", int(m), base.data.size) for m in m_values]
    row_specs += [(f"size_{size}", base.data.m, int(size)) for size in sizes]

    results: dict[tuple, dict] = {}
    rows = []
    for label, m, size in row_specs:
        if cell_filter and cell_filter not in label:
            logger.info("cell %s filtered out", label)
            continue
        key = (m, size)
        if key not in results:
            data = dataclasses.replace(base.data, m=m, size=size)
            config = dataclasses.replace(base, data=data)
            try:
                results[key] = run_cell(config, workdir / "cells" / f"m{m}_size{size}")
            except TraceLocError as exc:
                logger.error("cell %s failed: %s", label, exc)
                results[key] = {"error": str(exc)}
        rows.append({"cell": label, **results[key]})
    return _finish_report("size_length", rows, workdir)


def ablation_suite(base: RunConfig, workdir, cell_filter: str | None = None) -> SweepReport:
    """The six-variant ablation table; all cells share data and seeds."""
    cells = [
        (name, dataclasses.replace(base, ablation=ablation))
        for name, ablation in ABLATION_VARIANTS
    ]
    return _run_cells("ablation", cells, workdir, cell_filter)
