"""Plot-ready CSV/JSON emission for reports, optimizer traces and landscapes."""
from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Literal

from .bundle import ResultBundle
from .optics import coordinate_names
from .schemas import ExperimentReport, ScatterPoint
from .services.experiments import TaskResult
from .services.optimizer import LandscapeGrid, OptimizationTrace

LEARNING_CURVE_COLUMNS = ("n_train", "test_mse", "sigma")
SCATTER_COLUMNS = ("true_value", "predicted_value", "split")
CONFUSION_ROWS = ("true_entangled", "true_separable")
CONFUSION_COLUMNS = ("pred_entangled", "pred_separable")


def _prefixed(prefix: str, name: str) -> str:
    return f"{prefix}_{name}" if prefix else name


def confusion_payload(report: ExperimentReport) -> dict[str, object]:
    if report.confusion is None:
        raise ValueError("report carries no confusion matrix")
    return {
        "rows": list(CONFUSION_ROWS),
        "columns": list(CONFUSION_COLUMNS),
        "matrix": report.confusion,
        "total": sum(map(sum, report.confusion)),
        "accuracy": report.accuracy,
    }


def _scatter_by_observable(report: ExperimentReport) -> dict[str, list[ScatterPoint]]:
    groups: dict[str, list[ScatterPoint]] = {}
    for point in report.predictions:
        groups.setdefault(point.observable, []).append(point)
    return groups


def emit_plot_data(
    report: ExperimentReport,
    bundle: ResultBundle,
    prefix: str = "",
    formats: Sequence[Literal["csv", "json"]] = ("csv", "json"),
) -> list[Path]:
    """Learning curve and scatter as CSV, report and confusion matrix as JSON.

    Each observable gets its own ``scatter_<label>.csv`` with the fixed scatter columns.
    """

    written: list[Path] = []
    if "csv" in formats:
        written.append(
            bundle.write_csv(
                _prefixed(prefix, "learning_curve.csv"),
                LEARNING_CURVE_COLUMNS,
                ((p.n_train, p.test_mse, p.sigma) for p in report.learning_curve),
            )
        )
        for label, points in _scatter_by_observable(report).items():
            written.append(
                bundle.write_csv(
                    _prefixed(prefix, f"scatter_{label}.csv"),
                    SCATTER_COLUMNS,
                    ((p.true_value, p.predicted_value, p.split) for p in points),
                )
            )
    if "json" in formats:
        written.append(
            bundle.write_text(
                _prefixed(prefix, "report.json"), report.model_dump_json(indent=2)
            )
        )
        if report.confusion is not None:
            written.append(
                bundle.write_json(_prefixed(prefix, "confusion.json"), confusion_payload(report))
            )
    return written


def emit_trace(trace: OptimizationTrace, bundle: ResultBundle) -> list[Path]:
    """trace.csv with one column per angle of the traced settings, plus the full trace JSON."""

    names = coordinate_names(len(trace.initial))
    headers = ("step", "coordinate", *(f"{n}_deg" for n in names), "loss")
    csv_path = bundle.write_csv(
        "trace.csv",
        headers,
        (
            (step, r.coordinate, *(r.angles[n] for n in names), r.loss)
            for step, r in enumerate(trace.records)
        ),
    )
    payload = {
        "initial": {n: v for n, v in zip(names, _flatten(trace.initial), strict=True)},
        "best_settings": {
            n: v for n, v in zip(names, _flatten(trace.best_settings), strict=True)
        },
        "best_loss": trace.best_loss,
        "evaluations": trace.evaluations,
        "converged": trace.converged,
        "budget_exhausted": trace.budget_exhausted,
        "failed": trace.failed,
        "error": trace.error,
        "records": [
            {
                "evaluation": r.evaluation,
                "sweep": r.sweep,
                "iteration": r.iteration,
                "coordinate": r.coordinate,
                "angles": r.angles,
                "loss": r.loss,
                "gradient": r.gradient,
                "best_loss": r.best_loss,
            }
            for r in trace.records
        ],
    }
    return [csv_path, bundle.write_json("trace.json", payload)]


def _flatten(settings: Sequence) -> list[float]:
    return [angle for s in settings for angle in (s.theta, s.phi)]


def landscape_rows(grid: LandscapeGrid) -> list[tuple[float, float, float, float]]:
    """Row-major cells at the angles actually evaluated."""

    return [
        (a, b, float(grid.losses[i, j]), float(grid.sigma[i, j]))
        for i, a in enumerate(grid.evaluated1)
        for j, b in enumerate(grid.evaluated2)
    ]


def emit_landscape(grid: LandscapeGrid, bundle: ResultBundle) -> list[Path]:
    first, second = grid.coordinates
    headers = (f"{first}_deg", f"{second}_deg", "mse", "mse_sigma")
    written = [bundle.write_csv("landscape.csv", headers, landscape_rows(grid))]
    if grid.failures:
        written.append(
            bundle.write_json(
                "landscape_failures.json",
                [{"row": i, "column": j, "error": e} for i, j, e in grid.failures],
            )
        )
    return written


def write_task_result(result: TaskResult, bundle: ResultBundle) -> list[Path]:
    written: list[Path] = []
    for name, report in result.reports.items():
        written.extend(emit_plot_data(report, bundle, prefix=name))
    if result.trace is not None:
        written.extend(emit_trace(result.trace, bundle))
    if result.landscape is not None:
        written.extend(emit_landscape(result.landscape, bundle))
    if result.resamples:
        metrics = list(result.resamples[0])
        written.append(
            bundle.write_csv(
                "resamples.csv",
                ("resample", *metrics),
                ((k, *(s[m] for m in metrics)) for k, s in enumerate(result.resamples)),
            )
        )
    written.append(
        bundle.write_json("summary.json", json.loads(json.dumps(result.summary, default=str)))
    )
    return written


__all__ = [
    "CONFUSION_COLUMNS",
    "CONFUSION_ROWS",
    "LEARNING_CURVE_COLUMNS",
    "SCATTER_COLUMNS",
    "confusion_payload",
    "emit_landscape",
    "emit_plot_data",
    "emit_trace",
    "landscape_rows",
    "write_task_result",
]
