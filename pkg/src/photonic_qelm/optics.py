"""Jones calculus and quantum-walk reservoir construction.

The walker lives on polarization ⊗ OAM. States are ordered OAM-major: the basis
vector |μ, m⟩ sits at index ``2 * (m - m_min) + μ`` with μ = 0 for H and 1 for V,
so waveplates act block-diagonally on each OAM mode.
"""
from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

import numpy as np
from numpy.typing import NDArray

ComplexMatrix = NDArray[np.complex128]

DEFAULT_ANGLE_GRID = 0.1
WAVEPLATE_PERIOD = 180.0

_NORM_TOL = 1e-12
_SUBUNITARY_TOL = 1e-10

# Circular basis in (H, V) components: columns are |L⟩ and |R⟩.
_CIRCULAR = np.array([[1.0, 1.0], [1.0j, -1.0j]], dtype=complex) / math.sqrt(2.0)


class TruncationError(ValueError):
    """Raised when a q-plate would shift populated amplitude outside the OAM register."""


class ElementKind(str, Enum):
    HWP = "hwp"
    QWP = "qwp"
    QPLATE = "qplate"


class FeatureMode(str, Enum):
    """Whether detected probabilities are renormalized by the post-selected total."""

    UNCONDITIONAL = "unconditional"
    RENORMALIZED = "renormalized"


@dataclass(frozen=True, slots=True)
class JonesVector:
    """Normalized polarization amplitudes c_H |H⟩ + c_V |V⟩."""

    c_h: complex
    c_v: complex

    def __post_init__(self) -> None:
        norm = abs(self.c_h) ** 2 + abs(self.c_v) ** 2
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"Jones vector is not normalized: |c|^2 = {norm!r}")

    @classmethod
    def from_amplitudes(cls, c_h: complex, c_v: complex) -> JonesVector:
        norm = math.sqrt(abs(c_h) ** 2 + abs(c_v) ** 2)
        if norm == 0.0:
            raise ValueError("Jones vector has zero amplitude")
        return cls(complex(c_h) / norm, complex(c_v) / norm)

    @classmethod
    def from_array(cls, values: Sequence[complex] | NDArray[np.complex128]) -> JonesVector:
        arr = np.asarray(values, dtype=complex).reshape(2)
        return cls.from_amplitudes(complex(arr[0]), complex(arr[1]))

    def as_array(self) -> NDArray[np.complex128]:
        return np.array([self.c_h, self.c_v], dtype=complex)

    def density_matrix(self) -> ComplexMatrix:
        c = self.as_array()
        return np.outer(c, c.conj())


HORIZONTAL = JonesVector(1.0 + 0.0j, 0.0j)
VERTICAL = JonesVector(0.0j, 1.0 + 0.0j)


@dataclass(frozen=True, slots=True)
class OamRegister:
    """Contiguous block of OAM modes m_min..m_max."""

    m_min: int = -2
    m_max: int = 2

    def __post_init__(self) -> None:
        if self.m_max < self.m_min:
            raise ValueError(f"empty OAM register [{self.m_min}, {self.m_max}]")

    @property
    def size(self) -> int:
        return self.m_max - self.m_min + 1

    @property
    def dimension(self) -> int:
        return 2 * self.size

    @property
    def modes(self) -> range:
        return range(self.m_min, self.m_max + 1)

    def contains(self, m: int) -> bool:
        return self.m_min <= m <= self.m_max

    def index(self, m: int) -> int:
        if not self.contains(m):
            raise ValueError(f"OAM mode {m} outside register [{self.m_min}, {self.m_max}]")
        return m - self.m_min

    def state_index(self, m: int, polarization: int) -> int:
        return 2 * self.index(m) + polarization


def hwp_matrix(theta: float) -> ComplexMatrix:
    """Half-wave plate with fast axis at ``theta`` degrees."""

    t = math.radians(theta)
    c, s = math.cos(2.0 * t), math.sin(2.0 * t)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_matrix(phi: float) -> ComplexMatrix:
    """Quarter-wave plate with fast axis at ``phi`` degrees."""

    p = math.radians(phi)
    c, s = math.cos(p), math.sin(p)
    off = (1.0 - 1.0j) * s * c
    return np.array(
        [[c * c + 1.0j * s * s, off], [off, s * s + 1.0j * c * c]],
        dtype=complex,
    )


def _oam_shift(q: float) -> int:
    shift = 2.0 * q
    if abs(shift - round(shift)) > 1e-12:
        raise ValueError(f"q-plate charge must be a half-integer, got {q!r}")
    return int(round(shift))


def qplate_matrix(
    q: float,
    delta: float,
    register: OamRegister,
    *,
    populated: Iterable[int] | None = None,
    truncate: bool = False,
) -> ComplexMatrix:
    """Tuned q-plate on polarization ⊗ OAM.

    In the circular basis |L,m⟩ → cos(δ/2)|L,m⟩ + i sin(δ/2)|R,m+2q⟩ and
    |R,m⟩ → cos(δ/2)|R,m⟩ + i sin(δ/2)|L,m−2q⟩. Edge states whose partner falls
    outside the register are left untouched unless ``truncate`` is set, in which
    case their outgoing amplitude is dropped. ``populated`` lists the OAM modes that
    may carry amplitude; coupling any of them out of the register raises.
    """

    shift = _oam_shift(q)
    cos, sin = math.cos(delta / 2.0), math.sin(delta / 2.0)
    couples = abs(sin) > 0.0

    if populated is not None and couples and not truncate:
        for m in sorted(set(populated)):
            for target in (m + shift, m - shift):
                if not register.contains(target):
                    raise TruncationError(
                        f"q-plate (q={q}) shifts populated mode m={m} to m={target}, "
                        f"outside register [{register.m_min}, {register.m_max}]"
                    )

    dim = register.dimension
    circ = np.zeros((dim, dim), dtype=complex)
    edge = cos if truncate else 1.0
    for m in register.modes:
        col_l = register.state_index(m, 0)
        col_r = register.state_index(m, 1)
        if register.contains(m + shift):
            circ[col_l, col_l] = cos
            circ[register.state_index(m + shift, 1), col_l] = 1.0j * sin
        else:
            circ[col_l, col_l] = edge
        if register.contains(m - shift):
            circ[col_r, col_r] = cos
            circ[register.state_index(m - shift, 0), col_r] = 1.0j * sin
        else:
            circ[col_r, col_r] = edge

    basis = np.kron(np.eye(register.size), _CIRCULAR)
    return basis @ circ @ basis.conj().T


@dataclass(frozen=True, slots=True)
class OpticalElement:
    """A waveplate (angle in degrees) or a q-plate (charge q, tuning δ in radians)."""

    kind: ElementKind
    angle: float = 0.0
    charge: float = 0.5
    delta: float = math.pi

    def __post_init__(self) -> None:
        if self.kind is ElementKind.QPLATE:
            _oam_shift(self.charge)

    @classmethod
    def hwp(cls, theta: float) -> OpticalElement:
        return cls(ElementKind.HWP, angle=float(theta))

    @classmethod
    def qwp(cls, phi: float) -> OpticalElement:
        return cls(ElementKind.QWP, angle=float(phi))

    @classmethod
    def qplate(cls, q: float = 0.5, delta: float = math.pi) -> OpticalElement:
        return cls(ElementKind.QPLATE, charge=float(q), delta=float(delta))

    @property
    def is_waveplate(self) -> bool:
        return self.kind is not ElementKind.QPLATE

    def jones(self) -> ComplexMatrix:
        if self.kind is ElementKind.HWP:
            return hwp_matrix(self.angle)
        if self.kind is ElementKind.QWP:
            return qwp_matrix(self.angle)
        raise ValueError("q-plates have no polarization-only Jones matrix")

    def matrix(
        self,
        register: OamRegister,
        *,
        populated: Iterable[int] | None = None,
        truncate: bool = False,
    ) -> ComplexMatrix:
        if self.is_waveplate:
            return np.kron(np.eye(register.size), self.jones())
        return qplate_matrix(
            self.charge, self.delta, register, populated=populated, truncate=truncate
        )

    def propagate_support(self, populated: set[int], register: OamRegister) -> set[int]:
        if self.is_waveplate or math.sin(self.delta / 2.0) == 0.0:
            return set(populated)
        shift = _oam_shift(self.charge)
        grown = set(populated)
        for m in populated:
            grown.update(t for t in (m + shift, m - shift) if register.contains(t))
        return grown


@dataclass(frozen=True, slots=True)
class WalkSpec:
    """Ordered element list; the first element acts first on the |·, m=0⟩ input."""

    elements: tuple[OpticalElement, ...] = ()
    register: OamRegister = field(default_factory=OamRegister)
    truncate: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.register.contains(0):
            raise ValueError("OAM register must contain the m=0 input mode")

    def __add__(self, other: WalkSpec) -> WalkSpec:
        if other.register != self.register:
            raise ValueError("cannot concatenate walks on different registers")
        return WalkSpec(
            self.elements + other.elements, self.register, self.truncate or other.truncate
        )


def default_walk(register: OamRegister | None = None) -> WalkSpec:
    """Two-step walk whose q-plates (q=1/2, δ=π/2) populate every mode in m ∈ [−2, 2].

    The coin angles keep the projected POVM informationally complete at every projection
    setting; its Pauli-coefficient condition number is below 30 over most of the (θ, φ)
    plane and never diverges.
    """

    return WalkSpec(
        elements=(
            OpticalElement.qwp(75.0),
            OpticalElement.qplate(0.5, math.pi / 2.0),
            OpticalElement.hwp(52.5),
            OpticalElement.qwp(75.0),
            OpticalElement.qplate(0.5, math.pi / 2.0),
        ),
        register=register or OamRegister(),
    )


def jitter_walk(spec: WalkSpec, max_offset: float, rng: np.random.Generator) -> WalkSpec:
    """Copy of ``spec`` with each waveplate angle offset uniformly in ±max_offset degrees."""

    elements = []
    for element in spec.elements:
        if element.is_waveplate and max_offset > 0.0:
            offset = float(rng.uniform(-max_offset, max_offset))
            element = OpticalElement(element.kind, angle=element.angle + offset)
        elements.append(element)
    return WalkSpec(tuple(elements), spec.register, spec.truncate)


def build_walk(spec: WalkSpec) -> ComplexMatrix:
    """Composite walk unitary on the 2L-dimensional polarization ⊗ OAM space."""

    register = spec.register
    unitary = np.eye(register.dimension, dtype=complex)
    populated = {0}
    for element in spec.elements:
        matrix = element.matrix(register, populated=populated, truncate=spec.truncate)
        unitary = matrix @ unitary
        populated = element.propagate_support(populated, register)
    return unitary


def snap_angle(value: float, grid: float) -> float:
    """Round ``value`` to the nearest multiple of ``grid``, halves away from zero.

    Rounding works on the shortest decimal form of both numbers, so 0.15 on a 0.1°
    grid snaps to 0.2 even though the binary 0.15 lies just below the tie.
    """

    if grid < 0.0:
        raise ValueError(f"angle grid must be >= 0, got {grid!r}")
    if grid == 0.0:
        return float(value)
    step = Decimal(str(float(grid)))
    steps = (Decimal(str(float(value))) / step).to_integral_value(rounding=ROUND_HALF_UP)
    return float(steps * step) + 0.0


def wrap_angle(value: float, grid: float, period: float = WAVEPLATE_PERIOD) -> float:
    """Snap and fold an angle into [0, period)."""

    wrapped = snap_angle(value % period, grid)
    if wrapped >= period:
        wrapped -= period
    return snap_angle(wrapped, grid)


@dataclass(frozen=True, slots=True)
class MeasurementSettings:
    """Projection HWP angle ``theta`` and QWP angle ``phi`` (degrees), snapped to the grid."""

    theta: float = 0.0
    phi: float = 0.0
    grid_step: float = DEFAULT_ANGLE_GRID

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", snap_angle(self.theta, self.grid_step))
        object.__setattr__(self, "phi", snap_angle(self.phi, self.grid_step))

    def projection(self) -> ComplexMatrix:
        """HWP(θ) applied first, then QWP(φ)."""

        return qwp_matrix(self.phi) @ hwp_matrix(self.theta)


_COORDINATE = re.compile(r"(theta|phi)(\d*)")


def coordinate_names(lines: int) -> tuple[str, ...]:
    if lines == 1:
        return ("theta", "phi")
    return tuple(f"{axis}{i}" for i in range(1, lines + 1) for axis in ("theta", "phi"))


def _locate(settings: Sequence[MeasurementSettings], name: str) -> tuple[int, str]:
    match = _COORDINATE.fullmatch(name)
    if match is None:
        raise ValueError(f"unknown coordinate {name!r}")
    axis, digits = match.groups()
    if not digits and len(settings) != 1:
        raise ValueError(f"coordinate {name!r} is ambiguous for {len(settings)} lines")
    line = int(digits) - 1 if digits else 0
    if not 0 <= line < len(settings):
        raise ValueError(f"coordinate {name!r} refers to a missing walk line")
    return line, axis


def get_coordinate(settings: Sequence[MeasurementSettings], name: str) -> float:
    line, axis = _locate(settings, name)
    return getattr(settings[line], axis)


def with_coordinate(
    settings: Sequence[MeasurementSettings], name: str, value: float
) -> tuple[MeasurementSettings, ...]:
    line, axis = _locate(settings, name)
    current = settings[line]
    updated = MeasurementSettings(
        theta=value if axis == "theta" else current.theta,
        phi=value if axis == "phi" else current.phi,
        grid_step=current.grid_step,
    )
    return tuple(updated if i == line else s for i, s in enumerate(settings))


@dataclass(frozen=True)
class TransferMatrix:
    """Post-selected device map: rows are OAM outcomes, columns input polarizations.

    Single line: L×2. Two independent lines: (L·L)×4, the Kronecker product of the
    per-line blocks kept in ``factors``, rows (m, n) and columns (μ, ν) row-major.
    """

    entries: ComplexMatrix
    factors: tuple[ComplexMatrix, ...] = ()
    mode: FeatureMode = FeatureMode.RENORMALIZED

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise ValueError(f"transfer matrix must be 2-D, got shape {entries.shape}")
        largest = np.linalg.norm(entries, ord=2) if entries.size else 0.0
        if largest > 1.0 + _SUBUNITARY_TOL:
            raise ValueError(f"transfer matrix is not sub-unitary: σ_max = {largest!r}")
        entries.setflags(write=False)
        factors = tuple(np.array(f, dtype=complex) for f in self.factors) or (entries,)
        for f in factors:
            f.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "factors", factors)

    @property
    def lines(self) -> int:
        return len(self.factors)

    @property
    def n_outcomes(self) -> int:
        return self.entries.shape[0]


def effective_transfer(spec: WalkSpec, settings: MeasurementSettings) -> TransferMatrix:
    """T_{m,μ} = ⟨H,m| (QWP(φ) HWP(θ) ⊗ I) U_walk |μ, m=0⟩; the PBS V port is loss."""

    register = spec.register
    unitary = build_walk(spec)
    projected = np.kron(np.eye(register.size), settings.projection()) @ unitary
    rows = [register.state_index(m, 0) for m in register.modes]
    cols = [register.state_index(0, 0), register.state_index(0, 1)]
    return TransferMatrix(projected[np.ix_(rows, cols)])


def two_line_transfer(
    spec1: WalkSpec,
    settings1: MeasurementSettings,
    spec2: WalkSpec,
    settings2: MeasurementSettings,
) -> TransferMatrix:
    """Independent walk lines: T = T⁽¹⁾ ⊗ T⁽²⁾."""

    first = effective_transfer(spec1, settings1).entries
    second = effective_transfer(spec2, settings2).entries
    return TransferMatrix(np.kron(first, second), factors=(first, second))


def line_transfer(
    walks: Sequence[WalkSpec], settings: Sequence[MeasurementSettings]
) -> TransferMatrix:
    """Dispatch on the number of walk lines (one or two)."""

    if len(walks) != len(settings):
        raise ValueError(f"{len(walks)} walk lines but {len(settings)} settings")
    if len(walks) == 1:
        return effective_transfer(walks[0], settings[0])
    if len(walks) == 2:
        return two_line_transfer(walks[0], settings[0], walks[1], settings[1])
    raise ValueError(f"unsupported number of walk lines: {len(walks)}")


def effective_povm(transfer: TransferMatrix) -> NDArray[np.complex128]:
    """Effective POVM μ_b = t_b† t_b per outcome row, so that p_b = tr[μ_b ρ]."""

    rows = transfer.entries
    return np.einsum("bi,bj->bij", rows.conj(), rows)


_PAULI_BASIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def povm_condition_number(transfer: TransferMatrix) -> float:
    """Condition number of the outcome × Pauli-string matrix tr[μ_b σ_k].

    A linear readout amplifies feature noise by up to this factor; it is infinite when
    the POVM is not informationally complete.
    """

    povm = effective_povm(transfer)
    basis = [np.eye(1, dtype=complex)]
    for _ in range(transfer.lines):
        basis = [np.kron(b, sigma) for b in basis for sigma in _PAULI_BASIS]
    coefficients = np.einsum("bij,kji->bk", povm, np.stack(basis)).real
    return float(np.linalg.cond(coefficients))


__all__ = [
    "DEFAULT_ANGLE_GRID",
    "HORIZONTAL",
    "VERTICAL",
    "ElementKind",
    "FeatureMode",
    "JonesVector",
    "MeasurementSettings",
    "OamRegister",
    "OpticalElement",
    "TransferMatrix",
    "TruncationError",
    "WalkSpec",
    "build_walk",
    "coordinate_names",
    "default_walk",
    "effective_povm",
    "effective_transfer",
    "get_coordinate",
    "hwp_matrix",
    "jitter_walk",
    "line_transfer",
    "povm_condition_number",
    "qplate_matrix",
    "qwp_matrix",
    "snap_angle",
    "two_line_transfer",
    "with_coordinate",
    "wrap_angle",
]
