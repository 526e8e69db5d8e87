"""Linear QELM readout: observables, targets, pseudoinverse training and scoring."""
from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .photon_stats import FeatureVector

logger = logging.getLogger(__name__)

RealMatrix = NDArray[np.float64]
ComplexMatrix = NDArray[np.complex128]

DEFAULT_SVD_CUTOFF = 1e-12
_HERMITIAN_TOL = 1e-12
_IMAG_TOL = 1e-10
_RANK_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Raised when matrix or vector shapes are incompatible."""


class DegenerateFeaturesWarning(UserWarning):
    """Emitted when the feature matrix has rank below its number of outcomes."""


@dataclass(frozen=True)
class Observable:
    matrix: ComplexMatrix
    label: str

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"observable {self.label!r} must be square, got {matrix.shape}")
        if np.max(np.abs(matrix - matrix.conj().T)) > _HERMITIAN_TOL:
            raise ValueError(f"observable {self.label!r} is not Hermitian")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


_PAULIS: dict[str, ComplexMatrix] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_SQRT_HALF = 1.0 / math.sqrt(2.0)
# (HH, HV, VH, VV) coefficients.
_BELL: dict[str, tuple[complex, complex, complex, complex]] = {
    "psi_plus": (0, _SQRT_HALF, _SQRT_HALF, 0),
    "psi_minus": (0, _SQRT_HALF, -_SQRT_HALF, 0),
    "phi_plus": (_SQRT_HALF, 0, 0, _SQRT_HALF),
    "phi_minus": (_SQRT_HALF, 0, 0, -_SQRT_HALF),
}


def pauli(label: str) -> Observable:
    """Pauli matrix in the (H, V) basis with H ≡ |0⟩."""

    key = label.upper()
    if key not in _PAULIS:
        raise ValueError(f"unknown Pauli label {label!r}")
    return Observable(_PAULIS[key], key)


def bell_state(which: str) -> NDArray[np.complex128]:
    if which not in _BELL:
        raise ValueError(f"unknown Bell state {which!r}")
    return np.array(_BELL[which], dtype=complex)


def bell_witness(which: str) -> Observable:
    """Projector witness 𝒲_B = I/2 − |B⟩⟨B|; negative value certifies entanglement."""

    b = bell_state(which)
    return Observable(0.5 * np.eye(4) - np.outer(b, b.conj()), f"W_{which}")


def observable_from_label(label: str) -> Observable:
    if label.startswith("W_"):
        return bell_witness(label[2:])
    return pauli(label)


def build_targets(
    observables: Sequence[Observable], states: Sequence[ComplexMatrix] | NDArray
) -> RealMatrix:
    """Y_ji = tr[𝒪_j ρ_i]."""

    rhos = np.asarray(states, dtype=complex)
    if rhos.ndim != 3 or not observables:
        raise DimensionMismatchError("expected a stack of density matrices and >= 1 observable")
    ops = np.stack([o.matrix for o in observables])
    if ops.shape[1:] != rhos.shape[1:]:
        raise DimensionMismatchError(
            f"observables act on dimension {ops.shape[1]}, states have {rhos.shape[1]}"
        )
    values = np.einsum("jab,iba->ji", ops, rhos)
    if np.max(np.abs(values.imag), initial=0.0) > _IMAG_TOL:
        raise ValueError("targets have a non-negligible imaginary part")
    return np.ascontiguousarray(values.real)


def pseudoinverse(
    matrix: RealMatrix, cutoff: float = DEFAULT_SVD_CUTOFF, max_rank: int | None = None
) -> RealMatrix:
    """Moore–Penrose pseudoinverse via SVD, dropping σ < cutoff · σ_max.

    With ``max_rank`` only the leading ``max_rank`` singular values are inverted.
    """

    p = np.asarray(matrix, dtype=float)
    u, s, vh = np.linalg.svd(p, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(p.T.shape)
    keep = s >= cutoff * s[0]
    if max_rank is not None:
        keep[max_rank:] = False
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vh.T * inv) @ u.T


def matrix_rank(matrix: RealMatrix, cutoff: float = DEFAULT_SVD_CUTOFF) -> int:
    s = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= cutoff * s[0]))


@dataclass(frozen=True)
class ReadoutMatrix:
    """Trained readout W (n_obs × n_out) with the training metadata."""

    w: RealMatrix
    svd_cutoff: float = DEFAULT_SVD_CUTOFF
    ridge: float | None = None
    rank: int = 0
    degenerate: bool = False
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValueError("readout matrix must be a finite 2-D array")
        if self.svd_cutoff <= 0.0:
            raise ValueError("svd_cutoff must be > 0")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n_outcomes(self) -> int:
        return self.w.shape[1]


def train(
    features: RealMatrix,
    targets: RealMatrix,
    svd_cutoff: float = DEFAULT_SVD_CUTOFF,
    ridge: float | None = None,
    expected_rank: int | None = None,
) -> ReadoutMatrix:
    """Ridgeless W = Y P⁺ by default; with ridge λ, W = Y Pᵀ (P Pᵀ + λI)⁻¹.

    The readout is flagged degenerate when rank(P) falls below ``expected_rank``
    (default: the number of outcomes). Reservoirs with more outcomes than the input
    operator space has dimensions pass that dimension instead; the ridgeless fit then
    inverts only the leading ``expected_rank`` singular values of P.
    """

    p = np.asarray(features, dtype=float)
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if p.ndim != 2 or p.shape[1] < 1:
        raise DimensionMismatchError("feature matrix needs at least one column")
    if y.shape[1] != p.shape[1]:
        raise DimensionMismatchError(
            f"{p.shape[1]} feature columns but {y.shape[1]} target columns"
        )
    if not 0.0 < svd_cutoff < 1.0:
        raise ValueError(f"svd_cutoff must lie in (0, 1), got {svd_cutoff!r}")

    rank = matrix_rank(p, svd_cutoff)
    required = p.shape[0] if expected_rank is None else min(expected_rank, p.shape[0])
    degenerate = rank < required
    if degenerate:
        message = f"feature matrix rank {rank} < {required} ({p.shape[0]} outcomes)"
        logger.warning(message)
        warnings.warn(message, DegenerateFeaturesWarning, stacklevel=2)

    if ridge is None:
        w = y @ pseudoinverse(p, svd_cutoff, max_rank=expected_rank)
    else:
        if ridge <= 0.0:
            raise ValueError(f"ridge must be > 0, got {ridge!r}")
        gram = p @ p.T + ridge * np.eye(p.shape[0])
        w = np.linalg.solve(gram, p @ y.T).T
    return ReadoutMatrix(
        w=w,
        svd_cutoff=svd_cutoff,
        ridge=ridge,
        rank=rank,
        degenerate=degenerate,
        metadata={"n_train": p.shape[1], "n_outcomes": p.shape[0]},
    )


def predict(readout: ReadoutMatrix, features: FeatureVector | RealMatrix) -> RealMatrix:
    """ŷ = W p; a matrix of feature columns gives a matrix of predictions. No clipping."""

    values = features.values if isinstance(features, FeatureVector) else features
    p = np.asarray(values, dtype=float)
    if p.shape[0] != readout.n_outcomes:
        raise DimensionMismatchError(
            f"readout expects {readout.n_outcomes} outcomes, got {p.shape[0]}"
        )
    return readout.w @ p


def mse(predictions: RealMatrix, targets: RealMatrix) -> float:
    a = np.asarray(predictions, dtype=float)
    b = np.asarray(targets, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def concurrence(rho: ComplexMatrix) -> float:
    """Wootters concurrence of a two-qubit state.

    With ρ = X X† over its nonzero eigenvectors, the square roots of the eigenvalues of
    ρ ρ̃ are the singular values of Xᵀ (σ_y ⊗ σ_y) X. Eigenvalues below
    ``_RANK_TOL`` · λ_max are treated as zero, so pure states reduce to 2|ad − bc|.
    """

    rho = np.asarray(rho, dtype=complex)
    values, vectors = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = values > _RANK_TOL * max(float(values[-1]), 0.0)
    if not np.any(keep):
        return 0.0
    x = vectors[:, keep] * np.sqrt(values[keep])
    yy = np.kron(_PAULIS["Y"], _PAULIS["Y"])
    roots = np.zeros(4)
    singular = np.linalg.svd(x.T @ yy @ x, compute_uv=False)
    roots[: singular.size] = singular
    return float(max(0.0, roots[0] - roots[1] - roots[2] - roots[3]))


def confusion_matrix(true_values: RealMatrix, predicted: RealMatrix) -> list[list[int]]:
    """Rows (true_entangled, true_separable), columns (pred_entangled, pred_separable).

    A state counts as entangled when its witness value is negative.
    """

    true_neg = np.asarray(true_values) < 0.0
    pred_neg = np.asarray(predicted) < 0.0
    return [
        [int(np.sum(true_neg & pred_neg)), int(np.sum(true_neg & ~pred_neg))],
        [int(np.sum(~true_neg & pred_neg)), int(np.sum(~true_neg & ~pred_neg))],
    ]


def accuracy(confusion: list[list[int]]) -> float:
    total = sum(map(sum, confusion))
    return (confusion[0][0] + confusion[1][1]) / total if total else float("nan")


__all__ = [
    "DEFAULT_SVD_CUTOFF",
    "DegenerateFeaturesWarning",
    "DimensionMismatchError",
    "Observable",
    "ReadoutMatrix",
    "accuracy",
    "bell_state",
    "bell_witness",
    "build_targets",
    "concurrence",
    "confusion_matrix",
    "matrix_rank",
    "mse",
    "observable_from_label",
    "pauli",
    "predict",
    "pseudoinverse",
    "train",
]
