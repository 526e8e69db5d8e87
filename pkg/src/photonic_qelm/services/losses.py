"""Loss evaluators: the measured objective the reservoir optimizer descends."""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from ..optics import MeasurementSettings, WalkSpec, line_transfer
from ..photon_stats import DegenerateInputError
from ..readout import (
    DEFAULT_SVD_CUTOFF,
    Observable,
    build_targets,
    mse,
    predict,
    train,
)
from ..schemas import SamplingConfig
from ..states import StateDataset
from .acquisition import coherent_feature_matrix

ProjectionSettings = tuple[MeasurementSettings, ...]


class LossEvaluationError(RuntimeError):
    """Raised when a loss cannot be measured at the requested settings."""


@dataclass(frozen=True, slots=True)
class LossResult:
    loss: float
    metadata: dict[str, Any] = field(default_factory=dict)


class LossEvaluator(Protocol):
    def __call__(self, settings: ProjectionSettings) -> LossResult:
        """Measure the loss at one projection setting per walk line."""

    def with_seed(self, seed: int) -> LossEvaluator:
        """Independent copy whose noise stream starts from ``seed``."""


@dataclass
class FunctionLoss(LossEvaluator):
    """Deterministic loss given as a plain function of the settings."""

    func: Callable[[ProjectionSettings], float]
    evaluations: int = 0
    history: list[ProjectionSettings] = field(default_factory=list)

    def __call__(self, settings: ProjectionSettings) -> LossResult:
        self.evaluations += 1
        self.history.append(tuple(settings))
        return LossResult(float(self.func(tuple(settings))))

    def with_seed(self, seed: int) -> FunctionLoss:
        return FunctionLoss(self.func)


@dataclass
class SimulatedLoss(LossEvaluator):
    """Training MSE of a readout refitted on coherent-light features of a fixed mini-batch.

    Every call rebuilds the reservoir at the requested projection, acquires the
    mini-batch features (with intensity noise unless ``sampling.noiseless``), trains
    the ridgeless readout and reports its MSE on the same batch. Noiseless results are
    cached per setting; noisy calls redraw from the evaluator's own generator.
    """

    walks: Sequence[WalkSpec]
    observables: Sequence[Observable]
    batch: StateDataset
    sampling: SamplingConfig
    seed: int = 0
    svd_cutoff: float = DEFAULT_SVD_CUTOFF
    evaluations: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.walks = tuple(self.walks)
        self.observables = tuple(self.observables)
        self._rng = np.random.default_rng(self.seed)
        self._targets = build_targets(self.observables, self.batch.density_matrices)
        self._cache: dict[tuple[tuple[float, float], ...], LossResult] = {}

    def __call__(self, settings: ProjectionSettings) -> LossResult:
        self.evaluations += 1
        key = tuple((s.theta, s.phi) for s in settings)
        if self.sampling.noiseless and key in self._cache:
            return self._cache[key]
        try:
            transfer = line_transfer(self.walks, settings)
            acquired = coherent_feature_matrix(transfer, self.batch, self.sampling, self._rng)
            readout = train(
                acquired.features,
                self._targets,
                self.svd_cutoff,
                expected_rank=4 ** transfer.lines,
            )
            loss = mse(predict(readout, acquired.features), self._targets)
        except (DegenerateInputError, np.linalg.LinAlgError) as exc:
            raise LossEvaluationError(f"loss evaluation failed at {key}: {exc}") from exc
        result = LossResult(loss, {"rank": readout.rank, "degenerate": readout.degenerate})
        if self.sampling.noiseless:
            self._cache[key] = result
        return result

    def with_seed(self, seed: int) -> SimulatedLoss:
        return SimulatedLoss(
            walks=self.walks,
            observables=self.observables,
            batch=self.batch,
            sampling=self.sampling,
            seed=seed,
            svd_cutoff=self.svd_cutoff,
        )


__all__ = [
    "FunctionLoss",
    "LossEvaluationError",
    "LossEvaluator",
    "LossResult",
    "ProjectionSettings",
    "SimulatedLoss",
]
