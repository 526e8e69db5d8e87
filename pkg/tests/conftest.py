from __future__ import annotations

import json
from collections.abc import Callable, Iterator
from pathlib import Path

import numpy as np
import pytest

from photonic_qelm.config import get_settings
from photonic_qelm.optics import (
    FeatureMode,
    JonesVector,
    MeasurementSettings,
    OamRegister,
    OpticalElement,
    WalkSpec,
    default_walk,
)
from photonic_qelm.schemas import SamplingConfig


@pytest.fixture(autouse=True)
def _reset_settings(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    get_settings.cache_clear()
    monkeypatch.setenv("QELM_OUTPUT_DIR", str(tmp_path / "results"))
    try:
        yield
    finally:
        get_settings.cache_clear()


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture()
def walk() -> WalkSpec:
    return default_walk()


@pytest.fixture()
def settings() -> MeasurementSettings:
    return MeasurementSettings(theta=20.0, phi=125.0)


@pytest.fixture()
def exact_sampling() -> SamplingConfig:
    return SamplingConfig(noiseless=True, feature_mode=FeatureMode.UNCONDITIONAL)


def random_jones(rng: np.random.Generator) -> JonesVector:
    return JonesVector.from_array(rng.normal(size=2) + 1j * rng.normal(size=2))


def random_walk(rng: np.random.Generator, steps: int = 2) -> WalkSpec:
    """Random coins between partially tuned q=1/2 plates on the m ∈ [−2, 2] register."""

    elements: list[OpticalElement] = []
    for _ in range(steps):
        elements.append(OpticalElement.qwp(float(rng.uniform(0.0, 180.0))))
        elements.append(OpticalElement.hwp(float(rng.uniform(0.0, 180.0))))
        elements.append(OpticalElement.qplate(0.5, float(rng.uniform(0.3, np.pi))))
    return WalkSpec(tuple(elements), OamRegister(-steps, steps))


def random_settings(rng: np.random.Generator) -> MeasurementSettings:
    return MeasurementSettings(float(rng.uniform(0.0, 180.0)), float(rng.uniform(0.0, 180.0)))


@pytest.fixture()
def write_config(tmp_path: Path) -> Callable[[dict], Path]:
    def _write(payload: dict, name: str = "run.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return path

    return _write


@pytest.fixture()
def make_jones() -> Callable[[np.random.Generator], JonesVector]:
    return random_jones


@pytest.fixture()
def make_walk() -> Callable[..., WalkSpec]:
    return random_walk


@pytest.fixture()
def make_settings() -> Callable[[np.random.Generator], MeasurementSettings]:
    return random_settings
