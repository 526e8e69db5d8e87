from __future__ import annotations

import math

import numpy as np
import pytest

from photonic_qelm.optics import (
    HORIZONTAL,
    ElementKind,
    JonesVector,
    MeasurementSettings,
    OamRegister,
    OpticalElement,
    TransferMatrix,
    TruncationError,
    WalkSpec,
    build_walk,
    coordinate_names,
    default_walk,
    effective_povm,
    effective_transfer,
    get_coordinate,
    hwp_matrix,
    jitter_walk,
    line_transfer,
    povm_condition_number,
    qplate_matrix,
    qwp_matrix,
    snap_angle,
    two_line_transfer,
    with_coordinate,
    wrap_angle,
)
from photonic_qelm.photon_stats import single_photon_probs

SQRT_HALF = 1.0 / math.sqrt(2.0)


def _is_unitary(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    return np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))) < tol


def test_jones_vector_rejects_unnormalized_amplitudes():
    with pytest.raises(ValueError, match="not normalized"):
        JonesVector(1.0, 1.0)
    normalized = JonesVector.from_amplitudes(3.0, 4.0j)
    assert abs(normalized.c_h) ** 2 + abs(normalized.c_v) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_jones_vector_rejects_zero_amplitude():
    with pytest.raises(ValueError):
        JonesVector.from_amplitudes(0.0, 0.0)


@pytest.mark.parametrize(
    ("theta", "expected"),
    [
        (0.0, [[1, 0], [0, -1]]),
        (45.0, [[0, 1], [1, 0]]),
    ],
)
def test_hwp_matrix_reference_angles(theta, expected):
    np.testing.assert_allclose(hwp_matrix(theta), np.array(expected), atol=1e-12)


def test_hwp_at_22_5_degrees_makes_diagonal_polarization():
    out = hwp_matrix(22.5) @ np.array([1.0, 0.0])
    np.testing.assert_allclose(out, [SQRT_HALF, SQRT_HALF], atol=1e-12)
    assert np.linalg.det(hwp_matrix(22.5)) == pytest.approx(-1.0)


@pytest.mark.parametrize(
    ("phi", "expected"),
    [
        (0.0, [[1, 0], [0, 1j]]),
        (90.0, [[1j, 0], [0, 1]]),
    ],
)
def test_qwp_matrix_reference_angles(phi, expected):
    np.testing.assert_allclose(qwp_matrix(phi), np.array(expected), atol=1e-12)


def test_qwp_at_45_degrees_makes_circular_polarization():
    out = qwp_matrix(45.0) @ np.array([1.0, 0.0])
    np.testing.assert_allclose(out, [(1 + 1j) / 2, (1 - 1j) / 2], atol=1e-12)
    np.testing.assert_allclose(np.abs(out), [SQRT_HALF, SQRT_HALF], atol=1e-12)


def test_element_matrices_are_unitary_for_random_parameters(rng):
    register = OamRegister()
    for _ in range(1000):
        angle = float(rng.uniform(-360.0, 360.0))
        assert _is_unitary(hwp_matrix(angle))
        assert _is_unitary(qwp_matrix(angle))
    for _ in range(50):
        delta = float(rng.uniform(0.0, 2.0 * math.pi))
        assert _is_unitary(qplate_matrix(0.5, delta, register))
        assert _is_unitary(qplate_matrix(1.0, delta, register))


def _circular_state(register: OamRegister, m: int, handedness: str) -> np.ndarray:
    state = np.zeros(register.dimension, dtype=complex)
    sign = 1.0 if handedness == "L" else -1.0
    state[register.state_index(m, 0)] = SQRT_HALF
    state[register.state_index(m, 1)] = sign * 1j * SQRT_HALF
    return state


def test_qplate_full_tuning_flips_handedness_and_shifts_oam():
    register = OamRegister()
    out = qplate_matrix(0.5, math.pi, register) @ _circular_state(register, 0, "L")
    np.testing.assert_allclose(out, 1j * _circular_state(register, 1, "R"), atol=1e-12)


def test_qplate_half_tuning_splits_amplitude():
    register = OamRegister()
    out = qplate_matrix(0.5, math.pi / 2.0, register) @ _circular_state(register, 0, "L")
    expected = SQRT_HALF * _circular_state(register, 0, "L") + 1j * SQRT_HALF * _circular_state(
        register, 1, "R"
    )
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_untuned_qplate_is_identity():
    register = OamRegister()
    np.testing.assert_allclose(qplate_matrix(0.5, 0.0, register), np.eye(10), atol=1e-12)


def test_qplate_rejects_non_half_integer_charge():
    with pytest.raises(ValueError, match="half-integer"):
        OpticalElement.qplate(0.3)


def test_walk_that_leaves_register_raises_truncation_error():
    plates = tuple(OpticalElement.qplate(0.5, math.pi / 2.0) for _ in range(3))
    spec = WalkSpec(plates, OamRegister(-2, 2))
    with pytest.raises(TruncationError):
        build_walk(spec)


def test_truncated_walk_drops_escaping_amplitude():
    plates = tuple(OpticalElement.qplate(0.5, math.pi / 2.0) for _ in range(3))
    unitary = build_walk(WalkSpec(plates, OamRegister(-2, 2), truncate=True))
    assert np.linalg.norm(unitary, ord=2) <= 1.0 + 1e-10
    assert not _is_unitary(unitary)


def test_empty_walk_is_identity():
    np.testing.assert_allclose(build_walk(WalkSpec()), np.eye(10), atol=1e-12)


def test_single_hwp_is_block_diagonal_per_mode():
    unitary = build_walk(WalkSpec((OpticalElement.hwp(0.0),)))
    np.testing.assert_allclose(unitary, np.kron(np.eye(5), np.diag([1.0, -1.0])), atol=1e-12)


@pytest.mark.parametrize(
    ("delta", "support"),
    [
        (math.pi / 2.0, {-2, -1, 0, 1, 2}),
        (math.pi, {-2, 0, 2}),
    ],
)
def test_default_walk_support_and_unitarity(delta, support):
    base = default_walk()
    elements = tuple(
        OpticalElement.qplate(e.charge, delta) if e.kind is ElementKind.QPLATE else e
        for e in base.elements
    )
    spec = WalkSpec(elements, base.register)
    unitary = build_walk(spec)
    assert _is_unitary(unitary)

    register = spec.register
    out = unitary[:, register.state_index(0, 0)]
    populated = {
        m
        for m in register.modes
        if np.linalg.norm(out[2 * register.index(m) : 2 * register.index(m) + 2]) > 1e-12
    }
    assert populated == support


def test_walk_composition_is_consistent(make_walk, rng):
    first, second = make_walk(rng, 1), make_walk(rng, 1)
    register = OamRegister(-2, 2)
    a = WalkSpec(first.elements, register)
    b = WalkSpec(second.elements, register)
    np.testing.assert_allclose(
        build_walk(a + b), build_walk(b) @ build_walk(a), atol=1e-12
    )


def test_trivial_walk_transfer_has_single_row():
    transfer = effective_transfer(WalkSpec(), MeasurementSettings(0.0, 0.0))
    nonzero = np.flatnonzero(np.linalg.norm(transfer.entries, axis=1) > 1e-12)
    assert list(nonzero) == [2]
    projection = qwp_matrix(0.0) @ hwp_matrix(0.0)
    np.testing.assert_allclose(transfer.entries[2], projection[0], atol=1e-12)


def test_default_walk_transfer_is_subunitary(walk):
    transfer = effective_transfer(walk, MeasurementSettings(0.0, 0.0))
    column_norms = np.sum(np.abs(transfer.entries) ** 2, axis=0)
    assert np.all(column_norms <= 1.0 + 1e-12)
    assert column_norms.sum() <= 2.0 + 1e-12
    assert np.linalg.svd(transfer.entries, compute_uv=False).max() <= 1.0 + 1e-10


def test_transfer_matrix_rejects_gain():
    with pytest.raises(ValueError, match="sub-unitary"):
        TransferMatrix(np.array([[2.0, 0.0]]))


def test_transfer_matches_brute_force_evolution(walk, settings):
    transfer = effective_transfer(walk, settings)
    register = walk.register
    state = build_walk(walk)[:, register.state_index(0, 0)]
    projected = np.kron(np.eye(register.size), settings.projection()) @ state
    brute = np.abs(projected[0::2]) ** 2
    probs = single_photon_probs(transfer, HORIZONTAL).values
    np.testing.assert_allclose(probs, brute / brute.sum(), atol=1e-12)


def test_waveplate_period_leaves_probabilities_unchanged(walk, make_jones, rng):
    jones = make_jones(rng)
    base = effective_transfer(walk, MeasurementSettings(31.4, 77.7))
    shifted = effective_transfer(walk, MeasurementSettings(31.4 + 180.0, 77.7))
    np.testing.assert_allclose(
        single_photon_probs(base, jones).values,
        single_photon_probs(shifted, jones).values,
        atol=1e-12,
    )


def test_two_line_transfer_is_kronecker_product(make_walk, make_settings, rng):
    spec1, spec2 = make_walk(rng), make_walk(rng)
    s1, s2 = make_settings(rng), make_settings(rng)
    t1 = effective_transfer(spec1, s1).entries
    t2 = effective_transfer(spec2, s2).entries
    joint = two_line_transfer(spec1, s1, spec2, s2)
    assert joint.entries.shape == (25, 4)
    assert joint.lines == 2
    for m in range(5):
        for n in range(5):
            for mu in range(2):
                for nu in range(2):
                    assert joint.entries[5 * m + n, 2 * mu + nu] == pytest.approx(
                        t1[m, mu] * t2[n, nu], abs=1e-12
                    )


def test_two_trivial_lines_have_one_nonzero_row():
    joint = two_line_transfer(WalkSpec(), MeasurementSettings(), WalkSpec(), MeasurementSettings())
    rows = np.flatnonzero(np.linalg.norm(joint.entries, axis=1) > 1e-12)
    assert list(rows) == [12]


def test_swapping_lines_permutes_rows_and_columns(make_walk, make_settings, rng):
    spec1, spec2 = make_walk(rng), make_walk(rng)
    s1, s2 = make_settings(rng), make_settings(rng)
    forward = two_line_transfer(spec1, s1, spec2, s2).entries
    swapped = two_line_transfer(spec2, s2, spec1, s1).entries
    rows = [5 * n + m for m in range(5) for n in range(5)]
    cols = [2 * nu + mu for mu in range(2) for nu in range(2)]
    np.testing.assert_allclose(forward, swapped[np.ix_(rows, cols)], atol=1e-12)


def test_line_transfer_rejects_mismatched_settings(walk):
    with pytest.raises(ValueError):
        line_transfer([walk], [MeasurementSettings(), MeasurementSettings()])


def test_effective_povm_reproduces_probabilities(walk, settings, make_jones, rng):
    transfer = effective_transfer(walk, settings)
    povm = effective_povm(transfer)
    jones = make_jones(rng)
    from_povm = np.einsum("bij,ji->b", povm, jones.density_matrix()).real
    raw = np.abs(transfer.entries @ jones.as_array()) ** 2
    np.testing.assert_allclose(from_povm, raw, atol=1e-12)
    slack = np.eye(2) - povm.sum(axis=0)
    assert np.linalg.eigvalsh(slack).min() >= -1e-10


@pytest.mark.parametrize(
    ("theta", "phi", "bound"),
    [
        (20.0, 125.0, 6.0),
        (120.0, 120.0, 6.0),
        (165.0, 30.0, 6.0),
        (60.0, 90.0, 10.0),
        (0.0, 0.0, 20.0),
    ],
)
def test_default_walk_is_well_conditioned(theta, phi, bound):
    transfer = effective_transfer(default_walk(), MeasurementSettings(theta, phi))
    assert povm_condition_number(transfer) < bound


def test_default_walk_condition_number_stays_bounded():
    walk = default_walk()
    worst = max(
        povm_condition_number(effective_transfer(walk, MeasurementSettings(theta, phi)))
        for theta in range(0, 180, 10)
        for phi in range(0, 180, 10)
    )
    assert worst < 100.0


def test_two_line_condition_number_is_product_of_lines():
    walk = default_walk()
    first, second = MeasurementSettings(120.0, 120.0), MeasurementSettings(165.0, 30.0)
    joint = povm_condition_number(two_line_transfer(walk, first, walk, second))
    lines = [povm_condition_number(effective_transfer(walk, s)) for s in (first, second)]
    assert joint == pytest.approx(lines[0] * lines[1], rel=1e-9)
    assert joint < 30.0


def test_waveplates_alone_give_an_incomplete_povm():
    walk = WalkSpec((OpticalElement.hwp(22.5), OpticalElement.qwp(10.0)))
    assert povm_condition_number(effective_transfer(walk, MeasurementSettings())) > 1e12


@pytest.mark.parametrize(
    ("value", "grid", "expected"),
    [
        (12.34, 0.1, 12.3),
        (12.36, 0.1, 12.4),
        (-0.06, 0.1, -0.1),
        (28.42, 0.1, 28.4),
        (9.47, 0.1, 9.5),
        (1.2345, 0.0, 1.2345),
        (0.15, 0.1, 0.2),
        (0.35, 0.1, 0.4),
        (-0.15, 0.1, -0.2),
        (-0.35, 0.1, -0.4),
        (40.05, 0.1, 40.1),
        (2.25, 0.5, 2.5),
    ],
)
def test_snap_angle(value, grid, expected):
    assert snap_angle(value, grid) == pytest.approx(expected, abs=1e-12)


def test_settings_are_stored_on_the_grid():
    settings = MeasurementSettings(12.34, 56.789)
    for angle in (settings.theta, settings.phi):
        assert abs(angle / 0.1 - round(angle / 0.1)) < 1e-9


@pytest.mark.parametrize(
    ("value", "expected"),
    [(-0.1, 179.9), (180.0, 0.0), (359.96, 0.0), (45.0, 45.0)],
)
def test_wrap_angle_folds_into_one_period(value, expected):
    assert wrap_angle(value, 0.1) == pytest.approx(expected, abs=1e-9)


def test_coordinate_helpers():
    assert coordinate_names(1) == ("theta", "phi")
    assert coordinate_names(2) == ("theta1", "phi1", "theta2", "phi2")
    settings = (MeasurementSettings(10.0, 20.0), MeasurementSettings(30.0, 40.0))
    assert get_coordinate(settings, "phi2") == pytest.approx(40.0)
    updated = with_coordinate(settings, "theta1", 11.04)
    assert updated[0].theta == pytest.approx(11.0)
    assert updated[1] == settings[1]
    with pytest.raises(ValueError, match="ambiguous"):
        get_coordinate(settings, "theta")
    with pytest.raises(ValueError):
        get_coordinate(settings, "theta3")


def test_jitter_walk_moves_only_waveplates(walk):
    jittered = jitter_walk(walk, 1.0, np.random.default_rng(3))
    for before, after in zip(walk.elements, jittered.elements, strict=True):
        assert before.kind is after.kind
        if before.is_waveplate:
            assert abs(after.angle - before.angle) <= 1.0
        else:
            assert after == before
    assert jitter_walk(walk, 0.0, np.random.default_rng(3)) == walk
