"""Pydantic schemas for run configuration and reports."""
from __future__ import annotations

import math
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .optics import (
    DEFAULT_ANGLE_GRID,
    ElementKind,
    FeatureMode,
    MeasurementSettings,
    OamRegister,
    OpticalElement,
    WalkSpec,
    coordinate_names,
    default_walk,
)

PAULI_LABELS = ("I", "X", "Y", "Z")
WITNESS_LABELS = ("W_psi_plus", "W_psi_minus", "W_phi_plus", "W_phi_minus")


class Task(str, Enum):
    PAULI = "pauli"
    WITNESS = "witness"
    OPTIMIZE = "optimize"
    LANDSCAPE = "landscape"
    RESAMPLE = "resample"
    ROBUSTNESS = "robustness"


class DatasetKind(str, Enum):
    HAAR_QUBIT = "haar_qubit"
    LOCAL_ROTATIONS_HH = "local_rotations_hh"
    LOCAL_ROTATIONS_PSI_MINUS = "local_rotations_psi_minus"


class TrainingSource(str, Enum):
    COHERENT = "coherent"
    SINGLE_PHOTON = "single_photon"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ElementModel(StrictModel):
    kind: ElementKind
    angle_deg: float = 0.0
    charge: float = 0.5
    delta_rad: float = math.pi / 2.0

    @classmethod
    def from_element(cls, element: OpticalElement) -> ElementModel:
        if element.is_waveplate:
            return cls(kind=element.kind, angle_deg=element.angle)
        return cls(kind=element.kind, charge=element.charge, delta_rad=element.delta)

    def to_element(self) -> OpticalElement:
        if self.kind is ElementKind.QPLATE:
            return OpticalElement.qplate(self.charge, self.delta_rad)
        return OpticalElement(self.kind, angle=self.angle_deg)


class WalkModel(StrictModel):
    elements: list[ElementModel] = Field(
        default_factory=lambda: [ElementModel.from_element(e) for e in default_walk().elements]
    )
    m_min: int = -2
    m_max: int = 2
    truncate: bool = False

    @model_validator(mode="after")
    def _check_register(self) -> WalkModel:
        if self.m_max < self.m_min or not self.m_min <= 0 <= self.m_max:
            raise ValueError("register must satisfy m_min <= 0 <= m_max")
        return self

    def to_walk(self) -> WalkSpec:
        return WalkSpec(
            tuple(e.to_element() for e in self.elements),
            OamRegister(self.m_min, self.m_max),
            self.truncate,
        )


class SettingsModel(StrictModel):
    theta_deg: float = 0.0
    phi_deg: float = 0.0

    def to_settings(self, grid_step: float = DEFAULT_ANGLE_GRID) -> MeasurementSettings:
        return MeasurementSettings(self.theta_deg, self.phi_deg, grid_step)

    @classmethod
    def from_settings(cls, settings: MeasurementSettings) -> SettingsModel:
        return cls(theta_deg=settings.theta, phi_deg=settings.phi)


class ClassicalNoise(StrictModel):
    relative_error: float = Field(default=0.03, ge=0.0)
    n_samples: int = Field(default=10, ge=1)
    tau_seconds: float = Field(default=10.0, gt=0.0)


class SamplingConfig(StrictModel):
    """Shot counts, intensity noise model and feature normalization."""

    shots_per_setting: int = Field(default=3000, ge=1, description="Single-photon N")
    coincidence_shots: int = Field(default=300, ge=1, description="Photon-pair N")
    seed: int = 0
    classical_noise: ClassicalNoise = Field(default_factory=ClassicalNoise)
    alpha: float = Field(default=1.0, gt=0.0, description="Coherent amplitude, √photons")
    noiseless: bool = False
    feature_mode: FeatureMode = FeatureMode.RENORMALIZED


class OptimizerConfig(StrictModel):
    """Alternating finite-difference coordinate descent; angles in degrees."""

    learning_rate: float = Field(default=0.8, gt=0.0)
    fd_step: float = Field(default=2.87, gt=0.0)
    angle_grid: float = Field(default=DEFAULT_ANGLE_GRID, ge=0.0)
    minibatch_size: int = Field(default=15, ge=1)
    max_iters_per_coordinate: int = Field(default=20, ge=1)
    patience: int = Field(default=1, ge=1)
    max_sweeps: int = Field(default=10, ge=1)
    max_evaluations: int | None = Field(default=None, ge=1)
    retry_budget: int = Field(default=3, ge=0)
    improvement_floor: float = Field(default=1e-12, ge=0.0)
    coordinates: list[str] | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_step(self) -> OptimizerConfig:
        if self.fd_step < self.angle_grid:
            raise ValueError("fd_step must be >= angle_grid")
        return self


class DatasetSpec(StrictModel):
    kind: DatasetKind
    size: int = Field(ge=1)
    seed: int | None = None


class MonteCarloConfig(StrictModel):
    resamples: int = Field(default=100, ge=2)
    seed: int | None = None


class GridAxis(StrictModel):
    start: float = 0.0
    step: float = Field(gt=0.0)
    count: int = Field(ge=1)

    def values(self) -> list[float]:
        return [self.start + i * self.step for i in range(self.count)]


class LandscapeConfig(StrictModel):
    axis1: GridAxis
    axis2: GridAxis
    coordinates: list[str] = Field(min_length=2, max_length=2)
    repeats: int = Field(default=1, ge=1)


class JitterSpec(StrictModel):
    max_offset_deg: float = Field(default=1.0, ge=0.0)
    seed: int | None = None


def _default_curve(limit: int) -> list[int]:
    return [n for n in range(5, 101, 5) if n <= limit] or [limit]


class RunConfig(StrictModel):
    """Complete description of one run; defaults depend on the task."""

    schema_version: Literal[1] = 1
    task: Task
    seed: int = 0
    walks: list[WalkModel] | None = None
    settings: list[SettingsModel] | None = None
    comparison_settings: list[SettingsModel] | None = None
    target: str | None = None
    observables: list[str] | None = None
    train: DatasetSpec | None = None
    test: DatasetSpec | None = None
    training_source: TrainingSource = TrainingSource.COHERENT
    learning_curve: list[int] | None = None
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    monte_carlo: MonteCarloConfig = Field(default_factory=MonteCarloConfig)
    landscape: LandscapeConfig | None = None
    jitter: JitterSpec | None = None
    resample_experiment: Literal["pauli", "witness"] | None = None
    svd_cutoff: float = Field(default=1e-12, gt=0.0, lt=1.0)
    ridge: float | None = Field(default=None, gt=0.0)

    @field_validator("target")
    @classmethod
    def _check_target(cls, value: str | None) -> str | None:
        if value is not None and value not in PAULI_LABELS + WITNESS_LABELS:
            raise ValueError(f"unknown observable {value!r}")
        return value

    @field_validator("observables")
    @classmethod
    def _check_observables(cls, value: list[str] | None) -> list[str] | None:
        if value is None:
            return value
        unknown = [v for v in value if v not in PAULI_LABELS + WITNESS_LABELS]
        if unknown or not value:
            raise ValueError(f"unknown or empty observables: {unknown}")
        return value

    @field_validator("learning_curve")
    @classmethod
    def _check_curve(cls, value: list[int] | None) -> list[int] | None:
        if value is not None and (
            any(n < 1 for n in value) or any(b <= a for a, b in zip(value, value[1:]))
        ):
            raise ValueError("learning_curve sizes must be positive and strictly increasing")
        return value

    @property
    def lines(self) -> int:
        if self.task in (Task.WITNESS, Task.ROBUSTNESS):
            return 2
        if self.task is Task.RESAMPLE:
            return 2 if self.resample_experiment == "witness" else 1
        return 2 if (self.target or "").startswith("W_") else 1

    @model_validator(mode="after")
    def _materialize_defaults(self) -> RunConfig:
        if self.task is Task.RESAMPLE and self.resample_experiment is None:
            self.resample_experiment = "pauli"
        two_line = self.task in (Task.WITNESS, Task.ROBUSTNESS) or (
            self.task is Task.RESAMPLE and self.resample_experiment == "witness"
        )
        if self.target is None:
            self.target = "W_psi_plus" if two_line else "Y"
        lines = self.lines

        if self.observables is None:
            self.observables = ["X", "Y", "Z"] if lines == 1 else [self.target]
        if self.walks is None:
            self.walks = [WalkModel() for _ in range(lines)]
        if self.settings is None:
            self.settings = [SettingsModel() for _ in range(lines)]
        if len(self.walks) != lines or len(self.settings) != lines:
            raise ValueError(f"task {self.task.value} needs {lines} walk line(s) and settings")
        if self.comparison_settings is not None and len(self.comparison_settings) != lines:
            raise ValueError("comparison_settings must match the number of walk lines")
        if lines == 1 and any(o.startswith("W_") for o in self.observables):
            raise ValueError("witness observables need two walk lines")
        if lines == 2 and any(o in ("X", "Y", "Z") for o in self.observables):
            raise ValueError("single-qubit Paulis need one walk line")

        if self.train is None:
            self.train = self._default_train(lines)
        if self.test is None:
            self.test = self._default_test(lines)
        if self.learning_curve is None:
            if lines == 1:
                self.learning_curve = _default_curve(self.train.size)
            else:
                self.learning_curve = [self.train.size]
        if self.task is Task.LANDSCAPE and self.landscape is None:
            if lines == 1:
                axis = GridAxis(start=0.0, step=9.47, count=20)
                coords = ["theta", "phi"]
            else:
                axis = GridAxis(start=0.0, step=12.0, count=16)
                coords = ["theta1", "theta2"]
            self.landscape = LandscapeConfig(axis1=axis, axis2=axis, coordinates=coords)
        known = coordinate_names(lines)
        if self.landscape is not None:
            first, second = self.landscape.coordinates
            if first == second or first not in known or second not in known:
                raise ValueError(f"landscape coordinates must be two distinct names from {known}")
        if self.optimizer.coordinates and not set(self.optimizer.coordinates) <= set(known):
            raise ValueError(f"optimizer coordinates must be taken from {known}")
        if self.task is Task.ROBUSTNESS and self.jitter is None:
            self.jitter = JitterSpec()
        return self

    def _default_train(self, lines: int) -> DatasetSpec:
        if self.task in (Task.OPTIMIZE, Task.LANDSCAPE):
            if lines == 1:
                return DatasetSpec(
                    kind=DatasetKind.HAAR_QUBIT, size=self.optimizer.minibatch_size
                )
            return DatasetSpec(kind=DatasetKind.LOCAL_ROTATIONS_HH, size=35)
        if lines == 1:
            return DatasetSpec(kind=DatasetKind.HAAR_QUBIT, size=100)
        return DatasetSpec(kind=DatasetKind.LOCAL_ROTATIONS_HH, size=400)

    def _default_test(self, lines: int) -> DatasetSpec:
        if lines == 1:
            return DatasetSpec(kind=DatasetKind.HAAR_QUBIT, size=100)
        size = 56 if self.task is Task.ROBUSTNESS else 58
        return DatasetSpec(kind=DatasetKind.LOCAL_ROTATIONS_PSI_MINUS, size=size)

    def walk_specs(self) -> list[WalkSpec]:
        return [w.to_walk() for w in self.walks or []]

    def measurement_settings(
        self, which: list[SettingsModel] | None = None
    ) -> tuple[MeasurementSettings, ...]:
        chosen = which if which is not None else self.settings or []
        return tuple(s.to_settings(self.optimizer.angle_grid) for s in chosen)


class LearningCurvePoint(BaseModel):
    n_train: int
    test_mse: float
    sigma: float = 0.0


class ScatterPoint(BaseModel):
    observable: str
    true_value: float
    predicted_value: float
    split: Literal["train", "test"]


class MetricSpread(BaseModel):
    mean: float
    std: float
    samples: int
    failures: int = 0


class ReadoutMetadata(BaseModel):
    svd_cutoff: float
    ridge: float | None = None
    rank: int
    n_outcomes: int
    degenerate: bool
    feature_mode: FeatureMode
    settings_hash: str
    povm_condition: float | None = Field(
        default=None, description="Condition number of the projected POVM; None if singular"
    )


class ExperimentReport(BaseModel):
    """Outcome of one transfer-learning run."""

    kind: Literal["pauli", "witness"]
    observables: list[str]
    settings: list[SettingsModel]
    n_train: int
    n_test: int
    train_mse: float
    test_mse: float
    per_observable_test_mse: dict[str, float] = Field(default_factory=dict)
    learning_curve: list[LearningCurvePoint] = Field(default_factory=list)
    predictions: list[ScatterPoint] = Field(default_factory=list)
    confusion: list[list[int]] | None = None
    accuracy: float | None = None
    uncertainty: dict[str, MetricSpread] = Field(default_factory=dict)
    readout: ReadoutMetadata

    @model_validator(mode="after")
    def _check_consistency(self) -> ExperimentReport:
        sizes = [p.n_train for p in self.learning_curve]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("learning curve n_train values must be strictly increasing")
        if self.confusion is not None and sum(map(sum, self.confusion)) != self.n_test:
            raise ValueError("confusion matrix entries must sum to the test-set size")
        return self


__all__ = [
    "PAULI_LABELS",
    "WITNESS_LABELS",
    "ClassicalNoise",
    "DatasetKind",
    "DatasetSpec",
    "ElementModel",
    "ExperimentReport",
    "GridAxis",
    "JitterSpec",
    "LandscapeConfig",
    "LearningCurvePoint",
    "MetricSpread",
    "MonteCarloConfig",
    "OptimizerConfig",
    "ReadoutMetadata",
    "RunConfig",
    "SamplingConfig",
    "ScatterPoint",
    "SettingsModel",
    "Task",
    "TrainingSource",
    "WalkModel",
]
