"""Exact photon statistics and simulated measurement noise.

Feature vectors for one or two walk lines are computed from a ``TransferMatrix``
for single photons, photon pairs and coherent light. Randomness always comes from
an explicit ``numpy.random.Generator``; when none is passed a fresh one is seeded
from the sampling config, so every call is reproducible.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .optics import ComplexMatrix, FeatureMode, JonesVector, TransferMatrix
from .schemas import SamplingConfig

RealVector = NDArray[np.float64]

_DEGENERATE_TOTAL = 1e-14
_STATE_TOL = 1e-12
_EIGEN_TOL = 1e-10


class DegenerateInputError(ValueError):
    """Raised when a post-selected distribution has (numerically) zero total weight."""


class EmptySampleError(RuntimeError):
    """Raised by callers that cannot proceed with a zero-count sample."""


@dataclass(frozen=True)
class FeatureVector:
    """Nonnegative outcome weights; RENORMALIZED vectors sum to one."""

    values: RealVector
    mode: FeatureMode = FeatureMode.RENORMALIZED

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError(f"feature vector must be 1-D, got shape {values.shape}")
        if np.any(values < 0.0):
            raise ValueError("feature vector has negative entries")
        total = float(values.sum())
        if self.mode is FeatureMode.RENORMALIZED and abs(total - 1.0) > _STATE_TOL:
            raise ValueError(f"renormalized features sum to {total!r}, expected 1")
        if self.mode is FeatureMode.UNCONDITIONAL and total > 1.0 + _STATE_TOL:
            raise ValueError(f"unconditional features sum to {total!r} > 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TwoQubitState:
    """Two-qubit density matrix in the (HH, HV, VH, VV) basis."""

    rho: ComplexMatrix

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"two-qubit state must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > _STATE_TOL:
            raise ValueError("density matrix is not Hermitian")
        trace = np.trace(rho).real
        if abs(trace - 1.0) > _STATE_TOL:
            raise ValueError(f"density matrix has trace {trace!r}")
        if np.linalg.eigvalsh(rho).min() < -_EIGEN_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[complex] | NDArray) -> TwoQubitState:
        c = np.asarray(coefficients, dtype=complex).reshape(4)
        c = c / np.linalg.norm(c)
        return cls(np.outer(c, c.conj()))

    @classmethod
    def product(cls, first: JonesVector, second: JonesVector) -> TwoQubitState:
        return cls.from_coefficients(np.kron(first.as_array(), second.as_array()))

    def coefficients(self) -> NDArray[np.complex128]:
        """Pure-state coefficients c_{μν} (dominant eigenvector, global phase fixed)."""

        values, vectors = np.linalg.eigh(self.rho)
        if values[-1] < 1.0 - 1e-9:
            raise ValueError("state is mixed; coefficients are undefined")
        c = vectors[:, -1]
        pivot = int(np.argmax(np.abs(c)))
        return c * (abs(c[pivot]) / c[pivot])


@dataclass(frozen=True, slots=True)
class CoherentInput:
    """Coherent beam with overall amplitude ``alpha`` (√photons) and polarization ``jones``."""

    alpha: complex
    jones: JonesVector

    def __post_init__(self) -> None:
        if abs(self.alpha) == 0.0:
            raise ValueError("coherent input needs |alpha| > 0")

    @property
    def power(self) -> float:
        return abs(self.alpha) ** 2


@dataclass(frozen=True)
class SampledCounts:
    """Integer counts with empirical frequencies; ``empty`` flags a zero-count draw."""

    counts: NDArray[np.int64]
    frequencies: RealVector
    shots: int
    mode: FeatureMode

    @property
    def empty(self) -> bool:
        return int(self.counts.sum()) == 0

    def features(self) -> FeatureVector:
        if self.empty:
            raise EmptySampleError("no counts recorded for this setting")
        return FeatureVector(self.frequencies, self.mode)


def _finalize(raw: RealVector, mode: FeatureMode) -> FeatureVector:
    raw = np.clip(np.asarray(raw, dtype=float), 0.0, None)
    if mode is FeatureMode.UNCONDITIONAL:
        return FeatureVector(raw, mode)
    total = float(raw.sum())
    if total < _DEGENERATE_TOTAL:
        raise DegenerateInputError(
            f"post-selected total {total!r} is below {_DEGENERATE_TOTAL}; state is extinguished"
        )
    return FeatureVector(raw / total, mode)


def _single_line(transfer: TransferMatrix) -> ComplexMatrix:
    if transfer.entries.shape[1] != 2:
        raise ValueError(f"expected a single-line L×2 transfer, got {transfer.entries.shape}")
    return transfer.entries


def single_photon_probs(
    transfer: TransferMatrix, jones: JonesVector, mode: FeatureMode | None = None
) -> FeatureVector:
    """p_m = |(T c)_m|², optionally renormalized over the detected outcomes."""

    amplitudes = _single_line(transfer) @ jones.as_array()
    return _finalize(np.abs(amplitudes) ** 2, mode or transfer.mode)


def coherent_intensities(transfer: TransferMatrix, beam: CoherentInput) -> RealVector:
    """I_m = |α|² |(T c)_m|² in photon-rate units."""

    amplitudes = beam.alpha * (_single_line(transfer) @ beam.jones.as_array())
    return np.abs(amplitudes) ** 2


def normalize_intensities(intensities: RealVector) -> FeatureVector:
    """Normalize by the total transmitted intensity."""

    return _finalize(intensities, FeatureMode.RENORMALIZED)


def coherent_features(
    intensities: RealVector, beam: CoherentInput, mode: FeatureMode
) -> FeatureVector:
    """Feature vector from measured intensities: per-power (UNCONDITIONAL) or per-total."""

    if mode is FeatureMode.UNCONDITIONAL:
        scaled = np.clip(np.asarray(intensities, dtype=float) / beam.power, 0.0, None)
        total = float(scaled.sum())
        if total > 1.0:
            # Intensity noise can push the transmitted fraction past unity.
            scaled = scaled / total
        return FeatureVector(scaled, mode)
    return normalize_intensities(intensities)


def pair_outcomes(n_modes: int) -> list[tuple[int, int]]:
    """Unordered output-mode pairs (m ≤ n) in lexicographic order."""

    return [(m, n) for m in range(n_modes) for n in range(m, n_modes)]


def two_photon_coincidences(
    transfer_full: ComplexMatrix,
    coefficients: Sequence[complex] | NDArray,
    mode: FeatureMode = FeatureMode.RENORMALIZED,
) -> FeatureVector:
    """Two photons through a general L×4 device (columns 1H, 1V, 2H, 2V).

    With A_mn = Σ c_{μν} U_{m,1μ} U_{n,2ν}: p_mn = |A_mn + A_nm|² for m < n and
    p_mm = 2|A_mm|² for bunched outcomes. Outcomes follow ``pair_outcomes``.
    """

    u = np.asarray(transfer_full, dtype=complex)
    if u.ndim != 2 or u.shape[1] != 4:
        raise ValueError(f"expected an L×4 two-branch transfer, got shape {u.shape}")
    c = np.asarray(coefficients, dtype=complex).reshape(2, 2)
    first, second = u[:, :2], u[:, 2:]
    amplitude = first @ c @ second.T
    raw = []
    for m, n in pair_outcomes(u.shape[0]):
        if m == n:
            raw.append(2.0 * abs(amplitude[m, m]) ** 2)
        else:
            raw.append(abs(amplitude[m, n] + amplitude[n, m]) ** 2)
    return _finalize(np.array(raw), mode)


def _two_line(transfer: TransferMatrix) -> tuple[ComplexMatrix, ComplexMatrix]:
    if transfer.lines != 2:
        raise ValueError("expected a factorized two-line transfer matrix")
    return transfer.factors[0], transfer.factors[1]


def factorized_coincidences(
    transfer: TransferMatrix, state: TwoQubitState, mode: FeatureMode | None = None
) -> FeatureVector:
    """p_mn = tr[(μ_m⁽¹⁾ ⊗ μ_n⁽²⁾) ρ] for independent lines, (m, n) row-major."""

    _two_line(transfer)
    rows = transfer.entries
    raw = np.einsum("bi,ij,bj->b", rows, state.rho, rows.conj()).real
    return _finalize(raw, mode or transfer.mode)


def coherent_two_branch_features(
    beams: tuple[CoherentInput, CoherentInput],
    transfer: TransferMatrix,
    mode: FeatureMode = FeatureMode.RENORMALIZED,
    intensities: tuple[RealVector, RealVector] | None = None,
) -> FeatureVector:
    """Outer product of per-branch features, flattened row-major.

    ``intensities`` substitutes measured (noisy) branch intensities for the exact ones.
    """

    blocks = _two_line(transfer)
    per_branch = []
    for index, (beam, block) in enumerate(zip(beams, blocks, strict=True)):
        if intensities is None:
            measured = coherent_intensities(TransferMatrix(block), beam)
        else:
            measured = intensities[index]
        per_branch.append(coherent_features(measured, beam, mode).values)
    joint = np.outer(per_branch[0], per_branch[1]).ravel()
    return FeatureVector(joint, mode)


def coherent_two_mode_intensities(
    transfer_full: ComplexMatrix, beams: tuple[CoherentInput, CoherentInput]
) -> RealVector:
    """I_m = |(U α_in)_m|² for two coherent branches through a coupled L×4 device."""

    u = np.asarray(transfer_full, dtype=complex)
    alpha_in = np.concatenate([beam.alpha * beam.jones.as_array() for beam in beams])
    return np.abs(u @ alpha_in) ** 2


def _generator(cfg: SamplingConfig, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(cfg.seed)


def sample_counts(
    features: FeatureVector,
    cfg: SamplingConfig,
    rng: np.random.Generator | None = None,
    shots: int | None = None,
) -> SampledCounts:
    """Independent Poisson counts with means N·p_b.

    RENORMALIZED frequencies are counts / Σcounts; UNCONDITIONAL ones are counts / N
    (heralded normalization). A zero-count draw is returned flagged, not raised.
    """

    n_shots = shots if shots is not None else cfg.shots_per_setting
    if n_shots < 1:
        raise ValueError(f"shots must be >= 1, got {n_shots}")
    counts = _generator(cfg, rng).poisson(n_shots * features.values).astype(np.int64)
    return SampledCounts(
        counts=counts,
        frequencies=counts_to_frequencies(counts, n_shots, features.mode),
        shots=n_shots,
        mode=features.mode,
    )


def counts_to_frequencies(
    counts: NDArray[np.int64], shots: int, mode: FeatureMode
) -> RealVector:
    counts = np.asarray(counts, dtype=float)
    if mode is FeatureMode.UNCONDITIONAL:
        freqs = counts / shots
        total = float(freqs.sum())
        return freqs / total if total > 1.0 else freqs
    total = float(counts.sum())
    if total == 0.0:
        return np.zeros_like(counts)
    return counts / total


def resample_counts(counts: NDArray[np.int64], rng: np.random.Generator) -> NDArray[np.int64]:
    """Poisson resampling around measured counts, used for Monte-Carlo error bars."""

    return rng.poisson(np.asarray(counts, dtype=float)).astype(np.int64)


def classical_intensity_noise(
    intensities: RealVector,
    cfg: SamplingConfig,
    rng: np.random.Generator | None = None,
) -> RealVector:
    """Gaussian power-meter noise, σ_m = rel · I_m / √(n_samples · τ), clamped at zero."""

    values = np.asarray(intensities, dtype=float)
    if np.any(values < 0.0):
        raise ValueError("intensities must be nonnegative")
    noise = cfg.classical_noise
    if noise.relative_error == 0.0:
        return values.copy()
    sigma = noise.relative_error * values / math.sqrt(noise.n_samples * noise.tau_seconds)
    noisy = values + _generator(cfg, rng).normal(0.0, 1.0, size=values.shape) * sigma
    return np.clip(noisy, 0.0, None)


__all__ = [
    "CoherentInput",
    "DegenerateInputError",
    "EmptySampleError",
    "FeatureMode",
    "FeatureVector",
    "SampledCounts",
    "TwoQubitState",
    "classical_intensity_noise",
    "coherent_features",
    "coherent_intensities",
    "coherent_two_branch_features",
    "coherent_two_mode_intensities",
    "counts_to_frequencies",
    "factorized_coincidences",
    "normalize_intensities",
    "pair_outcomes",
    "resample_counts",
    "sample_counts",
    "single_photon_probs",
    "two_photon_coincidences",
]
