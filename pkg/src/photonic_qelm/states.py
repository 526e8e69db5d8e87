"""Seeded generation of input-state datasets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.stats import unitary_group

from .optics import JonesVector
from .readout import bell_state
from .schemas import DatasetKind, DatasetSpec

_HORIZONTAL = np.array([1.0, 0.0], dtype=complex)


@dataclass(frozen=True)
class StateDataset:
    """Pure input states with their density matrices.

    ``jones`` holds one polarization vector per photon for product states (one for
    qubits, two for locally rotated |HH⟩) and is empty for entangled datasets.
    """

    kind: DatasetKind
    vectors: NDArray[np.complex128]
    jones: tuple[tuple[JonesVector, ...], ...]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def density_matrices(self) -> NDArray[np.complex128]:
        return np.einsum("ia,ib->iab", self.vectors, self.vectors.conj())

    @property
    def is_product(self) -> bool:
        return bool(self.jones)

    def head(self, n: int) -> StateDataset:
        return StateDataset(self.kind, self.vectors[:n], self.jones[:n])


def _haar_unitary(rng: np.random.Generator) -> NDArray[np.complex128]:
    return unitary_group.rvs(2, random_state=rng)


def generate_states(spec: DatasetSpec, seed: int | None = None) -> StateDataset:
    """Haar qubits, or independent Haar local unitaries U_A ⊗ U_B on |HH⟩ or |Ψ⁻⟩.

    ``spec.seed`` wins over ``seed``; generation is deterministic in the chosen seed.
    """

    chosen = spec.seed if spec.seed is not None else (seed if seed is not None else 0)
    rng = np.random.default_rng(chosen)
    vectors = []
    jones: list[tuple[JonesVector, ...]] = []
    for _ in range(spec.size):
        if spec.kind is DatasetKind.HAAR_QUBIT:
            c = _haar_unitary(rng) @ _HORIZONTAL
            jones.append((JonesVector.from_array(c),))
            vectors.append(jones[-1][0].as_array())
            continue
        u_a, u_b = _haar_unitary(rng), _haar_unitary(rng)
        if spec.kind is DatasetKind.LOCAL_ROTATIONS_HH:
            first = JonesVector.from_array(u_a @ _HORIZONTAL)
            second = JonesVector.from_array(u_b @ _HORIZONTAL)
            jones.append((first, second))
            vectors.append(np.kron(first.as_array(), second.as_array()))
        else:
            psi = np.kron(u_a, u_b) @ bell_state("psi_minus")
            vectors.append(psi / np.linalg.norm(psi))
    return StateDataset(spec.kind, np.array(vectors, dtype=complex), tuple(jones))


__all__ = ["StateDataset", "generate_states"]
