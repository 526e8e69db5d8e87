"""Experiment pipelines: classical training, quantum testing, uncertainty and task dispatch."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ..optics import (
    MeasurementSettings,
    WalkSpec,
    jitter_walk,
    line_transfer,
    povm_condition_number,
)
from ..photon_stats import DegenerateInputError, EmptySampleError
from ..readout import (
    DimensionMismatchError,
    ReadoutMatrix,
    accuracy,
    build_targets,
    confusion_matrix,
    mse,
    observable_from_label,
    predict,
    train,
)
from ..schemas import (
    DatasetSpec,
    ExperimentReport,
    LearningCurvePoint,
    MetricSpread,
    MonteCarloConfig,
    ReadoutMetadata,
    RunConfig,
    SamplingConfig,
    ScatterPoint,
    SettingsModel,
    Task,
    TrainingSource,
)
from ..states import StateDataset, generate_states
from .acquisition import AcquiredFeatures, coherent_feature_matrix, quantum_feature_matrix
from .losses import SimulatedLoss
from .optimizer import (
    LandscapeGrid,
    OptimizationTrace,
    coordinate_descent,
    derive_seed,
    landscape_scan,
)

logger = logging.getLogger(__name__)

# Failures that invalidate one Monte-Carlo resample without aborting the run.
_RESAMPLE_FAILURES = (EmptySampleError, DegenerateInputError, np.linalg.LinAlgError)

# POVM condition number above which a warning is logged.
POORLY_CONDITIONED = 1e3


class ExperimentError(RuntimeError):
    """Raised when an experiment cannot be carried out as configured."""


def settings_hash(settings: Sequence[MeasurementSettings]) -> str:
    payload = json.dumps([[s.theta, s.phi] for s in settings])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class MonteCarloResult:
    spreads: dict[str, MetricSpread]
    samples: list[dict[str, float]] = field(default_factory=list)
    failures: int = 0


def monte_carlo_uncertainty(
    analysis: Callable[[np.random.Generator], dict[str, float]],
    cfg: MonteCarloConfig,
    seed: int = 0,
    threads: int = 1,
) -> MonteCarloResult:
    """Rerun ``analysis`` on ``cfg.resamples`` independent resample streams.

    Each resample gets a generator derived from (seed, index), so the result does not
    depend on ``threads``. Resamples that fail are tallied and excluded.
    """

    base = cfg.seed if cfg.seed is not None else seed

    def one(index: int) -> dict[str, float] | None:
        rng = np.random.default_rng(derive_seed(base, index))
        try:
            return analysis(rng)
        except _RESAMPLE_FAILURES as exc:
            logger.warning("resample %d failed: %s", index, exc)
            return None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(one, range(cfg.resamples)))

    samples = [o for o in outcomes if o is not None]
    failures = len(outcomes) - len(samples)
    spreads: dict[str, MetricSpread] = {}
    for key in samples[0] if samples else ():
        values = np.array([s[key] for s in samples], dtype=float)
        spreads[key] = MetricSpread(
            mean=float(np.mean(values)),
            std=float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
            samples=int(values.size),
            failures=failures,
        )
    if failures:
        logger.warning("%d of %d resamples failed", failures, cfg.resamples)
    return MonteCarloResult(spreads, samples, failures)


def _curve_key(n: int) -> str:
    return f"curve[{n}]"


@dataclass(frozen=True)
class _Fit:
    readout: ReadoutMatrix
    train_pred: np.ndarray
    test_pred: np.ndarray


def _fit(
    p_train: np.ndarray,
    y_train: np.ndarray,
    p_test: np.ndarray,
    *,
    svd_cutoff: float,
    ridge: float | None,
    expected_rank: int,
) -> _Fit:
    readout = train(p_train, y_train, svd_cutoff, ridge, expected_rank=expected_rank)
    return _Fit(readout, predict(readout, p_train), predict(readout, p_test))


@dataclass
class TransferRun:
    """A finished transfer experiment with the arrays behind its report."""

    report: ExperimentReport
    readout: ReadoutMatrix
    train_features: AcquiredFeatures
    test_features: AcquiredFeatures
    monte_carlo: MonteCarloResult | None = None


def _transfer_experiment(
    kind: Literal["pauli", "witness"],
    walks: Sequence[WalkSpec],
    settings: Sequence[MeasurementSettings],
    train_set: StateDataset,
    test_set: StateDataset,
    sampling: SamplingConfig,
    observables: Sequence[str],
    curve: Sequence[int],
    *,
    training_source: TrainingSource,
    monte_carlo: MonteCarloConfig | None,
    seed: int,
    svd_cutoff: float,
    ridge: float | None,
    threads: int,
) -> TransferRun:
    if any(n > len(train_set) for n in curve):
        raise ExperimentError(
            f"learning curve asks for {max(curve)} training states, only {len(train_set)} available"
        )
    transfer = line_transfer(walks, settings)
    expected_rank = 4 ** transfer.lines
    condition = povm_condition_number(transfer)
    if not math.isfinite(condition) or condition > POORLY_CONDITIONED:
        logger.warning(
            "projected POVM is poorly conditioned (cond=%.3g); readout will amplify noise",
            condition,
        )
    ops = [observable_from_label(label) for label in observables]
    try:
        y_train = build_targets(ops, train_set.density_matrices)
        y_test = build_targets(ops, test_set.density_matrices)
    except DimensionMismatchError as exc:
        raise ExperimentError(f"observables do not match the {kind} datasets: {exc}") from exc

    train_rng = np.random.default_rng(derive_seed(seed, 0))
    test_rng = np.random.default_rng(derive_seed(seed, 1))
    if training_source is TrainingSource.COHERENT:
        train_features = coherent_feature_matrix(transfer, train_set, sampling, train_rng)
    else:
        train_features = quantum_feature_matrix(transfer, train_set, sampling, train_rng)
    test_features = quantum_feature_matrix(transfer, test_set, sampling, test_rng)

    def fit(p_train: np.ndarray, n: int, p_test: np.ndarray) -> _Fit:
        return _fit(
            p_train[:, :n], y_train[:, :n], p_test,
            svd_cutoff=svd_cutoff, ridge=ridge, expected_rank=expected_rank,
        )

    def analysis(p_train: np.ndarray, p_test: np.ndarray) -> dict[str, float]:
        full = fit(p_train, len(train_set), p_test)
        metrics = {
            "train_mse": mse(full.train_pred, y_train),
            "test_mse": mse(full.test_pred, y_test),
        }
        for j, label in enumerate(observables):
            metrics[f"test_mse[{label}]"] = mse(full.test_pred[j], y_test[j])
        for n in curve:
            metrics[_curve_key(n)] = mse(fit(p_train, n, p_test).test_pred, y_test)
        return metrics

    full = fit(train_features.features, len(train_set), test_features.features)
    nominal = analysis(train_features.features, test_features.features)

    mc_result = None
    if monte_carlo is not None and not sampling.noiseless:
        mc_result = monte_carlo_uncertainty(
            lambda rng: analysis(train_features.resample(rng), test_features.resample(rng)),
            monte_carlo,
            seed=derive_seed(seed, 2),
            threads=threads,
        )
    spreads = mc_result.spreads if mc_result else {}

    predictions = [
        ScatterPoint(observable=label, true_value=float(t), predicted_value=float(p), split=split)
        for split, truth, pred in (
            ("train", y_train, full.train_pred),
            ("test", y_test, full.test_pred),
        )
        for j, label in enumerate(observables)
        for t, p in zip(truth[j], pred[j], strict=True)
    ]
    confusion = acc = None
    if kind == "witness":
        confusion = confusion_matrix(y_test[0], full.test_pred[0])
        acc = accuracy(confusion)

    report = ExperimentReport(
        kind=kind,
        observables=list(observables),
        settings=[SettingsModel.from_settings(s) for s in settings],
        n_train=len(train_set),
        n_test=len(test_set),
        train_mse=nominal["train_mse"],
        test_mse=nominal["test_mse"],
        per_observable_test_mse={
            label: nominal[f"test_mse[{label}]"] for label in observables
        },
        learning_curve=[
            LearningCurvePoint(
                n_train=n,
                test_mse=nominal[_curve_key(n)],
                sigma=spreads[_curve_key(n)].std if _curve_key(n) in spreads else 0.0,
            )
            for n in curve
        ],
        predictions=predictions,
        confusion=confusion,
        accuracy=acc,
        uncertainty=spreads,
        readout=ReadoutMetadata(
            svd_cutoff=svd_cutoff,
            ridge=ridge,
            rank=full.readout.rank,
            n_outcomes=full.readout.n_outcomes,
            degenerate=full.readout.degenerate,
            feature_mode=sampling.feature_mode,
            settings_hash=settings_hash(settings),
            povm_condition=condition if math.isfinite(condition) else None,
        ),
    )
    logger.info(
        "%s experiment: n_train=%d n_test=%d train_mse=%.4g test_mse=%.4g",
        kind, report.n_train, report.n_test, report.train_mse, report.test_mse,
    )
    return TransferRun(report, full.readout, train_features, test_features, mc_result)


def pauli_transfer_experiment(
    walk: WalkSpec,
    settings: MeasurementSettings,
    train_set: StateDataset,
    test_set: StateDataset,
    sampling: SamplingConfig,
    observables: Sequence[str] = ("X", "Y", "Z"),
    curve: Sequence[int] = (),
    *,
    training_source: TrainingSource = TrainingSource.COHERENT,
    monte_carlo: MonteCarloConfig | None = None,
    seed: int = 0,
    svd_cutoff: float = 1e-12,
    ridge: float | None = None,
    threads: int = 1,
) -> TransferRun:
    """Train on coherent-light features of qubit states, test on single-photon counts.

    For every size in ``curve`` the readout is refitted on the first n training
    columns and scored on the full test set.
    """

    return _transfer_experiment(
        "pauli", [walk], [settings], train_set, test_set, sampling, observables, curve,
        training_source=training_source, monte_carlo=monte_carlo, seed=seed,
        svd_cutoff=svd_cutoff, ridge=ridge, threads=threads,
    )


def witness_transfer_experiment(
    walks: Sequence[WalkSpec],
    settings: Sequence[MeasurementSettings],
    train_set: StateDataset,
    test_set: StateDataset,
    sampling: SamplingConfig,
    witness: str = "W_psi_plus",
    curve: Sequence[int] = (),
    *,
    training_source: TrainingSource = TrainingSource.COHERENT,
    monte_carlo: MonteCarloConfig | None = None,
    seed: int = 0,
    svd_cutoff: float = 1e-12,
    ridge: float | None = None,
    threads: int = 1,
) -> TransferRun:
    """Two-line transfer: product-state coherent training, coincidence-count testing.

    A test state is classified entangled iff its predicted witness value is negative.
    """

    if len(walks) != 2 or len(settings) != 2:
        raise ExperimentError("the witness experiment needs two walk lines")
    return _transfer_experiment(
        "witness", walks, settings, train_set, test_set, sampling, [witness],
        curve or [len(train_set)],
        training_source=training_source, monte_carlo=monte_carlo, seed=seed,
        svd_cutoff=svd_cutoff, ridge=ridge, threads=threads,
    )


def robustness_rerun(
    config: RunConfig, threads: int = 1
) -> tuple[TransferRun, TransferRun]:
    """Witness experiment on the nominal device, then on a jittered one with fresh datasets."""

    jitter = config.jitter
    if jitter is None:
        raise ExperimentError("robustness rerun needs a jitter spec")
    base = _witness_from_config(config, threads=threads)

    jitter_seed = jitter.seed if jitter.seed is not None else derive_seed(config.seed, 7)
    rng = np.random.default_rng(jitter_seed)
    walks = [jitter_walk(w, jitter.max_offset_deg, rng) for w in config.walk_specs()]
    fresh_seed = derive_seed(config.seed, 8)
    perturbed = witness_transfer_experiment(
        walks,
        config.measurement_settings(),
        generate_states(_fresh(config.train), seed=derive_seed(fresh_seed, 0)),
        generate_states(_fresh(config.test), seed=derive_seed(fresh_seed, 1)),
        config.sampling,
        config.target or "W_psi_plus",
        config.learning_curve or (),
        training_source=config.training_source,
        monte_carlo=config.monte_carlo,
        seed=fresh_seed,
        svd_cutoff=config.svd_cutoff,
        ridge=config.ridge,
        threads=threads,
    )
    logger.info(
        "robustness: nominal accuracy %.3f, perturbed accuracy %.3f",
        base.report.accuracy, perturbed.report.accuracy,
    )
    return base, perturbed


def _fresh(spec: DatasetSpec | None) -> DatasetSpec:
    if spec is None:
        raise ExperimentError("dataset spec missing")
    return spec.model_copy(update={"seed": None})


def _datasets(config: RunConfig) -> tuple[StateDataset, StateDataset]:
    if config.train is None or config.test is None:
        raise ExperimentError("train and test datasets must be configured")
    train_set = generate_states(config.train, seed=derive_seed(config.seed, 0))
    test_set = generate_states(config.test, seed=derive_seed(config.seed, 1))
    return train_set, test_set


def _pauli_from_config(
    config: RunConfig,
    settings: Sequence[MeasurementSettings] | None = None,
    threads: int = 1,
) -> TransferRun:
    train_set, test_set = _datasets(config)
    chosen = settings or config.measurement_settings()
    return pauli_transfer_experiment(
        config.walk_specs()[0],
        chosen[0],
        train_set,
        test_set,
        config.sampling,
        config.observables or ("X", "Y", "Z"),
        config.learning_curve or (),
        training_source=config.training_source,
        monte_carlo=config.monte_carlo,
        seed=config.seed,
        svd_cutoff=config.svd_cutoff,
        ridge=config.ridge,
        threads=threads,
    )


def _witness_from_config(
    config: RunConfig,
    settings: Sequence[MeasurementSettings] | None = None,
    threads: int = 1,
) -> TransferRun:
    train_set, test_set = _datasets(config)
    return witness_transfer_experiment(
        config.walk_specs(),
        settings or config.measurement_settings(),
        train_set,
        test_set,
        config.sampling,
        config.target or "W_psi_plus",
        config.learning_curve or (),
        training_source=config.training_source,
        monte_carlo=config.monte_carlo,
        seed=config.seed,
        svd_cutoff=config.svd_cutoff,
        ridge=config.ridge,
        threads=threads,
    )


def _target_loss(config: RunConfig) -> SimulatedLoss:
    if config.train is None:
        raise ExperimentError("a training mini-batch must be configured")
    batch = generate_states(config.train, seed=derive_seed(config.optimizer.seed, 0))
    return SimulatedLoss(
        walks=config.walk_specs(),
        observables=[observable_from_label(config.target or "Y")],
        batch=batch,
        sampling=config.sampling,
        seed=derive_seed(config.optimizer.seed, 1),
        svd_cutoff=config.svd_cutoff,
    )


@dataclass
class TaskResult:
    """Everything a task produced, keyed for the result bundle."""

    task: Task
    reports: dict[str, ExperimentReport] = field(default_factory=dict)
    trace: OptimizationTrace | None = None
    landscape: LandscapeGrid | None = None
    resamples: list[dict[str, float]] = field(default_factory=list)
    summary: dict[str, object] = field(default_factory=dict)
    error: str | None = None


class ExperimentService:
    """Runs one configured task."""

    def __init__(self, config: RunConfig, threads: int = 1) -> None:
        self._config = config
        self._threads = threads

    def run(self) -> TaskResult:
        task = self._config.task
        if task is Task.PAULI:
            return self._run_pauli()
        if task is Task.WITNESS:
            return self._run_witness()
        if task is Task.OPTIMIZE:
            return self._run_optimize()
        if task is Task.LANDSCAPE:
            return self._run_landscape()
        if task is Task.RESAMPLE:
            return self._run_resample()
        if task is Task.ROBUSTNESS:
            return self._run_robustness()
        raise ExperimentError(f"Unsupported task: {task}")

    def _run_pauli(self) -> TaskResult:
        config = self._config
        result = TaskResult(Task.PAULI)
        result.reports["pauli"] = _pauli_from_config(config, threads=self._threads).report
        if config.comparison_settings is not None:
            comparison = config.measurement_settings(config.comparison_settings)
            result.reports["pauli_comparison"] = _pauli_from_config(
                config, comparison, threads=self._threads
            ).report
        return result

    def _run_witness(self) -> TaskResult:
        config = self._config
        result = TaskResult(Task.WITNESS)
        result.reports["witness"] = _witness_from_config(config, threads=self._threads).report
        if config.comparison_settings is not None:
            comparison = config.measurement_settings(config.comparison_settings)
            result.reports["witness_comparison"] = _witness_from_config(
                config, comparison, threads=self._threads
            ).report
        return result

    def _evaluate(self, settings: Sequence[MeasurementSettings]) -> ExperimentReport:
        if self._config.lines == 1:
            return _pauli_from_config(self._config, settings, threads=self._threads).report
        return _witness_from_config(self._config, settings, threads=self._threads).report

    def _run_optimize(self) -> TaskResult:
        config = self._config
        loss = _target_loss(config)
        trace = coordinate_descent(loss, config.measurement_settings(), config.optimizer)
        result = TaskResult(Task.OPTIMIZE, trace=trace)
        result.summary = {
            "target": config.target,
            "initial_loss": trace.records[0].loss if trace.records else math.nan,
            "best_loss": trace.best_loss,
            "evaluations": trace.evaluations,
            "converged": trace.converged,
            "failed": trace.failed,
        }
        if trace.failed:
            result.error = f"coordinate descent failed: {trace.error}"
            return result
        result.reports["initial"] = self._evaluate(trace.initial)
        result.reports["optimized"] = self._evaluate(trace.best_settings)
        return result

    def _run_landscape(self) -> TaskResult:
        config = self._config
        spec = config.landscape
        if spec is None:
            raise ExperimentError("landscape grid not configured")
        grid = landscape_scan(
            _target_loss(config),
            config.measurement_settings(),
            spec.axis1,
            spec.axis2,
            spec.coordinates,
            repeats=spec.repeats,
            seed=config.seed,
            threads=self._threads,
            grid=config.optimizer.angle_grid,
        )
        cell = grid.argmin
        argmin = None
        if cell is None:
            logger.warning("every landscape cell failed; no minimum to report")
        else:
            argmin = [grid.evaluated1[cell[0]], grid.evaluated2[cell[1]]]
        result = TaskResult(Task.LANDSCAPE, landscape=grid)
        result.summary = {
            "target": config.target,
            "coordinates": list(grid.coordinates),
            "argmin": argmin,
            "best_loss": grid.best_loss,
            "failed_cells": len(grid.failures),
        }
        return result

    def _run_resample(self) -> TaskResult:
        config = self._config
        if config.sampling.noiseless:
            raise ExperimentError("Monte-Carlo resampling needs shot-sampled features")
        if config.resample_experiment == "witness":
            run = _witness_from_config(config, threads=self._threads)
        else:
            run = _pauli_from_config(config, threads=self._threads)
        result = TaskResult(Task.RESAMPLE)
        result.reports[run.report.kind] = run.report
        if run.monte_carlo is not None:
            result.resamples = run.monte_carlo.samples
            result.summary = {
                "resamples": config.monte_carlo.resamples,
                "failures": run.monte_carlo.failures,
            }
        return result

    def _run_robustness(self) -> TaskResult:
        base, perturbed = robustness_rerun(self._config, threads=self._threads)
        result = TaskResult(Task.ROBUSTNESS)
        result.reports["nominal"] = base.report
        result.reports["perturbed"] = perturbed.report
        result.summary = {
            "nominal_accuracy": base.report.accuracy,
            "perturbed_accuracy": perturbed.report.accuracy,
        }
        return result


__all__ = [
    "ExperimentError",
    "ExperimentService",
    "MonteCarloResult",
    "TaskResult",
    "TransferRun",
    "monte_carlo_uncertainty",
    "pauli_transfer_experiment",
    "robustness_rerun",
    "settings_hash",
    "witness_transfer_experiment",
]
