from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from photonic_qelm.bundle import ERROR_NAME, MANIFEST_NAME, ResultBundle
from photonic_qelm.export import emit_plot_data
from photonic_qelm.main import EXIT_BAD_CONFIG, EXIT_OK, EXIT_RUN_FAILED, main, run
from photonic_qelm.optics import MeasurementSettings
from photonic_qelm.schemas import DatasetKind, DatasetSpec, RunConfig
from photonic_qelm.services.experiments import ExperimentService, witness_transfer_experiment
from photonic_qelm.states import generate_states

EXACT = {"noiseless": True, "feature_mode": "unconditional"}


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def _manifest(out: Path) -> dict:
    return json.loads((out / MANIFEST_NAME).read_text(encoding="utf-8"))


def _snapshot(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_landscape_run_writes_full_grid(write_config, tmp_path):
    out = tmp_path / "landscape"
    path = write_config({"task": "landscape", "sampling": EXACT})
    assert main(["--config", str(path), "--out", str(out), "--quiet"]) == EXIT_OK

    rows = _read_csv(out / "landscape.csv")
    assert len(rows) == 400
    assert list(rows[0]) == ["theta_deg", "phi_deg", "mse", "mse_sigma"]
    assert rows[1]["phi_deg"] == "9.5"
    manifest = _manifest(out)
    assert manifest["status"] == "completed"
    assert "landscape.csv" in manifest["files"]
    assert manifest["files"] == sorted(manifest["files"])
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["failed_cells"] == 0


def test_noiseless_pauli_run_recovers_targets(write_config, tmp_path):
    out = tmp_path / "pauli"
    path = write_config(
        {
            "task": "pauli",
            "settings": [{"theta_deg": 20.0, "phi_deg": 125.0}],
            "sampling": EXACT,
            "learning_curve": [10, 50, 100],
        }
    )
    assert main(["--config", str(path), "--out", str(out), "--quiet"]) == EXIT_OK

    curve = _read_csv(out / "pauli_learning_curve.csv")
    assert [row["n_train"] for row in curve] == ["10", "50", "100"]
    assert float(curve[-1]["test_mse"]) < 1e-10
    for label in ("X", "Y", "Z"):
        scatter = _read_csv(out / f"pauli_scatter_{label}.csv")
        assert list(scatter[0]) == ["true_value", "predicted_value", "split"]
        assert len(scatter) == 200
        assert [row["split"] for row in scatter].count("test") == 100
    report = json.loads((out / "pauli_report.json").read_text(encoding="utf-8"))
    assert report["test_mse"] < 1e-10
    assert report["readout"]["feature_mode"] == "unconditional"


def test_witness_run_emits_confusion(write_config, tmp_path):
    out = tmp_path / "witness"
    path = write_config(
        {
            "task": "witness",
            "settings": [
                {"theta_deg": 20.0, "phi_deg": 125.0},
                {"theta_deg": 165.0, "phi_deg": 30.0},
            ],
            "train": {"kind": "local_rotations_hh", "size": 40},
            "sampling": EXACT,
        }
    )
    assert main(["--config", str(path), "--out", str(out), "--quiet"]) == EXIT_OK
    confusion = json.loads((out / "witness_confusion.json").read_text(encoding="utf-8"))
    assert confusion["total"] == 58
    assert confusion["rows"] == ["true_entangled", "true_separable"]


def test_optimize_run_writes_trace(write_config, tmp_path):
    out = tmp_path / "optimize"
    path = write_config(
        {
            "task": "optimize",
            "optimizer": {"max_evaluations": 12},
            "test": {"kind": "haar_qubit", "size": 10},
            "learning_curve": [15],
            "monte_carlo": {"resamples": 3},
        }
    )
    assert main(["--config", str(path), "--out", str(out), "--quiet"]) == EXIT_OK
    trace = _read_csv(out / "trace.csv")
    assert list(trace[0]) == ["step", "coordinate", "theta_deg", "phi_deg", "loss"]
    assert trace[0]["coordinate"] == "init"
    assert (out / "optimized_report.json").exists()
    assert json.loads((out / "trace.json").read_text(encoding="utf-8"))["evaluations"] <= 12


def test_identical_runs_give_identical_bundles(write_config, tmp_path):
    payload = {
        "task": "resample",
        "seed": 21,
        "train": {"kind": "haar_qubit", "size": 20},
        "test": {"kind": "haar_qubit", "size": 20},
        "learning_curve": [10, 20],
        "monte_carlo": {"resamples": 6},
    }
    path = write_config(payload)
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["--config", str(path), "--out", str(first), "--threads", "1"]) == EXIT_OK
    assert main(["--config", str(path), "--out", str(second), "--threads", "3"]) == EXIT_OK
    assert _snapshot(first) == _snapshot(second)
    assert (first / "resamples.csv").exists()


def test_bad_config_exits_with_error_record(write_config, tmp_path):
    out = tmp_path / "bad"
    path = write_config({"task": "optimize", "optimizer": {"learning_rate": -1}})
    assert main(["--config", str(path), "--out", str(out)]) == EXIT_BAD_CONFIG
    record = json.loads((out / ERROR_NAME).read_text(encoding="utf-8"))
    assert record["type"] == "ConfigValidationError"
    assert any("learning_rate" in f for f in record["fields"])


def test_unparseable_config_exits_with_error_record(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    out = tmp_path / "broken"
    assert main(["--config", str(path), "--out", str(out)]) == EXIT_BAD_CONFIG
    assert json.loads((out / ERROR_NAME).read_text(encoding="utf-8"))["type"] == "ConfigParseError"


def test_seed_override_is_recorded(write_config, tmp_path):
    out = tmp_path / "seeded"
    path = write_config(
        {
            "task": "pauli",
            "seed": 1,
            "train": {"kind": "haar_qubit", "size": 10},
            "test": {"kind": "haar_qubit", "size": 5},
            "learning_curve": [10],
            "sampling": EXACT,
        }
    )
    assert main(["--config", str(path), "--out", str(out), "--seed", "99"]) == EXIT_OK
    manifest = _manifest(out)
    assert manifest["seed"] == 99
    assert manifest["config"]["seed"] == 99


def test_failing_run_marks_manifest(write_config, tmp_path):
    out = tmp_path / "failing"
    path = write_config(
        {
            "task": "pauli",
            "train": {"kind": "haar_qubit", "size": 5},
            "learning_curve": [10],
            "sampling": EXACT,
        }
    )
    assert main(["--config", str(path), "--out", str(out)]) == EXIT_RUN_FAILED
    assert _manifest(out)["status"] == "failed"
    assert json.loads((out / ERROR_NAME).read_text(encoding="utf-8"))["type"] == "ExperimentError"


def test_run_propagates_errors(tmp_path, monkeypatch):
    def explode(self):
        raise RuntimeError("stage controller offline")

    monkeypatch.setattr(ExperimentService, "run", explode)
    config = RunConfig.model_validate({"task": "pauli", "sampling": EXACT})
    with pytest.raises(RuntimeError, match="offline"):
        run(config, tmp_path / "propagate")
    assert _manifest(tmp_path / "propagate")["status"] == "failed"
    record = json.loads((tmp_path / "propagate" / ERROR_NAME).read_text(encoding="utf-8"))
    assert record == {"type": "RuntimeError", "message": "stage controller offline"}


def test_output_dir_defaults_to_settings(write_config, tmp_path):
    path = write_config(
        {
            "task": "pauli",
            "train": {"kind": "haar_qubit", "size": 10},
            "test": {"kind": "haar_qubit", "size": 5},
            "learning_curve": [10],
            "sampling": EXACT,
        }
    )
    assert main(["--config", str(path), "--quiet"]) == EXIT_OK
    assert (tmp_path / "results" / MANIFEST_NAME).exists()


def test_emit_plot_data_respects_formats(walk, settings, exact_sampling, tmp_path):
    run = witness_transfer_experiment(
        (walk, walk),
        (settings, MeasurementSettings(165.0, 30.0)),
        generate_states(DatasetSpec(kind=DatasetKind.LOCAL_ROTATIONS_HH, size=40), seed=1),
        generate_states(DatasetSpec(kind=DatasetKind.LOCAL_ROTATIONS_PSI_MINUS, size=6), seed=2),
        exact_sampling,
    )
    bundle = ResultBundle(tmp_path / "plots")
    written = emit_plot_data(run.report, bundle, prefix="witness", formats=("json",))
    assert sorted(p.name for p in written) == ["witness_confusion.json", "witness_report.json"]
    confusion = json.loads(written[1].read_text(encoding="utf-8"))
    assert confusion["columns"] == ["pred_entangled", "pred_separable"]
    assert confusion["total"] == 6

    written = emit_plot_data(run.report, bundle, formats=("csv",))
    assert [p.name for p in written] == ["learning_curve.csv", "scatter_W_psi_plus.csv"]
    rows = _read_csv(written[1])
    assert list(rows[0]) == ["true_value", "predicted_value", "split"]
    assert len(rows) == 40 + 6
    for row in rows:
        assert float(row["predicted_value"]) == pytest.approx(float(row["true_value"]), abs=1e-9)
