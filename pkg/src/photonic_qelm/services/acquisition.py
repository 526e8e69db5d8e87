"""Feature acquisition: classical (coherent-light) and quantum (photon-counting) paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..optics import FeatureMode, TransferMatrix
from ..photon_stats import (
    CoherentInput,
    EmptySampleError,
    FeatureVector,
    TwoQubitState,
    classical_intensity_noise,
    coherent_features,
    coherent_intensities,
    coherent_two_branch_features,
    counts_to_frequencies,
    factorized_coincidences,
    resample_counts,
    sample_counts,
    single_photon_probs,
)
from ..schemas import SamplingConfig
from ..states import StateDataset

RealMatrix = NDArray[np.float64]


@dataclass(frozen=True)
class AcquiredFeatures:
    """Feature matrix P (outcomes × states) and, when shot-sampled, the raw counts."""

    features: RealMatrix
    mode: FeatureMode
    counts: NDArray[np.int64] | None = None
    shots: int | None = None

    def resample(self, rng: np.random.Generator) -> RealMatrix:
        """Recompute features from Poisson-resampled counts; exact features are returned as-is."""

        if self.counts is None or self.shots is None:
            return self.features
        columns = []
        for column in self.counts.T:
            redrawn = resample_counts(column, rng)
            if redrawn.sum() == 0:
                raise EmptySampleError("resampled setting recorded no counts")
            columns.append(counts_to_frequencies(redrawn, self.shots, self.mode))
        return np.stack(columns, axis=1)


def _coherent_column(
    transfer: TransferMatrix,
    jones: tuple,
    sampling: SamplingConfig,
    rng: np.random.Generator,
) -> FeatureVector:
    beams = tuple(CoherentInput(sampling.alpha, c) for c in jones)
    mode = sampling.feature_mode
    if transfer.lines == 1:
        intensities = coherent_intensities(transfer, beams[0])
        if not sampling.noiseless:
            intensities = classical_intensity_noise(intensities, sampling, rng)
        return coherent_features(intensities, beams[0], mode)

    per_branch = []
    for beam, block in zip(beams, transfer.factors, strict=True):
        intensities = coherent_intensities(TransferMatrix(block), beam)
        if not sampling.noiseless:
            intensities = classical_intensity_noise(intensities, sampling, rng)
        per_branch.append(intensities)
    return coherent_two_branch_features(beams, transfer, mode, intensities=tuple(per_branch))


def coherent_feature_matrix(
    transfer: TransferMatrix,
    dataset: StateDataset,
    sampling: SamplingConfig,
    rng: np.random.Generator,
) -> AcquiredFeatures:
    """Classical training features: one coherent beam per photon of each product state."""

    if not dataset.is_product:
        raise ValueError("coherent light can only encode product (separable) states")
    if len(dataset.jones[0]) != transfer.lines:
        raise ValueError(
            f"dataset has {len(dataset.jones[0])} photon(s) per state, "
            f"reservoir has {transfer.lines} line(s)"
        )
    columns = [
        _coherent_column(transfer, jones, sampling, rng).values for jones in dataset.jones
    ]
    return AcquiredFeatures(np.stack(columns, axis=1), sampling.feature_mode)


def quantum_feature_matrix(
    transfer: TransferMatrix,
    dataset: StateDataset,
    sampling: SamplingConfig,
    rng: np.random.Generator,
) -> AcquiredFeatures:
    """Single-photon probabilities or photon-pair coincidences, shot-sampled unless noiseless."""

    mode = sampling.feature_mode
    exact: list[FeatureVector]
    if transfer.lines == 1:
        if not dataset.is_product:
            raise ValueError("single-line reservoirs need qubit states")
        exact = [single_photon_probs(transfer, jones[0], mode) for jones in dataset.jones]
        shots = sampling.shots_per_setting
    else:
        exact = [
            factorized_coincidences(transfer, TwoQubitState(rho), mode)
            for rho in dataset.density_matrices
        ]
        shots = sampling.coincidence_shots

    if sampling.noiseless:
        return AcquiredFeatures(np.stack([f.values for f in exact], axis=1), mode)

    samples = [sample_counts(f, sampling, rng, shots=shots) for f in exact]
    return AcquiredFeatures(
        features=np.stack([s.features().values for s in samples], axis=1),
        mode=mode,
        counts=np.stack([s.counts for s in samples], axis=1),
        shots=shots,
    )


__all__ = ["AcquiredFeatures", "coherent_feature_matrix", "quantum_feature_matrix"]
