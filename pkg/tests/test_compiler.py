import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from conftest import wrapped
from meshtailor.compiler import (PhaseProgram, commute_inverse_through_diagonal, count_clamped, decompose,
                                 decompose_batch, decompose_ideal, ideal_left_nulling_phases,
                                 ideal_right_nulling_phases, left_nulling_phases, null_with_Z, null_with_Zinv,
                                 nulling_schedule, reconstruct, reconstruct_batch, right_nulling_phases)
from meshtailor.linalg import fidelity_distance, haar_random_unitaries, haar_random_unitary
from meshtailor.mesh import BALANCED, clements_layout, mzi_matrix, theta_from_reflectivity

thetas = st.floats(0.05, np.pi / 2 - 0.05)
complexes = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)


def _unitarity_error(U):
    return np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))


# --- single nulling steps ----------------------------------------------------------

def test_null_with_Z_equal_magnitudes_balanced():
    U = haar_random_unitary(3, seed=0)
    U = U.copy()
    # make |U[1,0]| == |U[2,0]| with a rotation in rows 1, 2
    a, b = U[1, 0], U[2, 0]
    G = np.array([[np.conj(a), np.conj(b)], [-b, a]]) / np.hypot(abs(a), abs(b))
    R = np.array([[1, 1], [-1, 1]]) / np.sqrt(2)
    U[1:3] = R @ G @ U[1:3]
    assert abs(abs(U[1, 0]) - abs(U[2, 0])) < 1e-12
    phi_i, _, W = null_with_Z(U, 0, 2, BALANCED)
    assert phi_i == pytest.approx(np.pi / 2, abs=1e-12)
    assert abs(W[2, 0]) < 1e-12


@given(complexes, complexes)
def test_balanced_left_formulas_reduce_to_ideal(a, b):
    if abs(a) < 1e-6 or abs(b) < 1e-6:
        return
    pi_t, pe_t = left_nulling_phases(a, b, BALANCED)
    pi_0, pe_0 = ideal_left_nulling_phases(a, b)
    assert abs(pi_t - 2 * np.arctan(abs(a / b))) < 1e-9
    assert abs(pi_t - pi_0) < 1e-9
    assert abs(wrapped(pe_t, pe_0)) < 1e-9
    assert abs(wrapped(pe_0, -np.angle(a / b))) < 1e-12


@given(complexes, complexes)
def test_balanced_right_formulas_reduce_to_ideal(a, b):
    if abs(a) < 1e-6 or abs(b) < 1e-6:
        return
    pi_t, pe_t = right_nulling_phases(a, b, BALANCED)
    pi_0, pe_0 = ideal_right_nulling_phases(a, b)
    assert abs(pi_t - pi_0) < 1e-9
    assert abs(wrapped(pe_t, pe_0)) < 1e-9
    assert abs(wrapped(pe_0, -np.angle(b / a) + np.pi)) < 1e-12


@given(st.integers(0, 10_000), thetas)
def test_feasible_steps_null_exactly_and_stay_unitary(seed, theta):
    U = haar_random_unitary(4, seed)
    phi_i, phi_e, W = null_with_Z(U, 1, 3, theta)
    assert _unitarity_error(W) < 1e-12
    assert 0 <= phi_i <= 2 * np.pi and 0 <= phi_e < 2 * np.pi
    if 0 < phi_i:  # not clamped
        assert abs(W[3, 1]) < 1e-12
    phi_i, phi_e, W = null_with_Zinv(U, 0, 3, theta)
    assert _unitarity_error(W) < 1e-12
    if 0 < phi_i:
        assert abs(W[3, 0]) < 1e-12


def _brute_force_residual(a, b, theta, side):
    """Smallest achievable |nulled element| over all phases (independent optimiser)."""
    def f(p):
        Z = mzi_matrix(p[0], p[1], theta)
        if side == "left":
            return abs(Z[1, 0] * a + Z[1, 1] * b)
        Zi = Z.conj().T
        return abs(a * Zi[0, 0] + b * Zi[1, 0])
    starts = [(x, y) for x in np.linspace(0, 2 * np.pi, 7) for y in np.linspace(0, 2 * np.pi, 7)]
    return min(minimize(f, s, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14}).fun
               for s in starts)


@pytest.mark.parametrize("theta", [theta_from_reflectivity(0.3), theta_from_reflectivity(0.8)])
def test_clamped_left_step_reaches_analytic_minimum(theta):
    # |b| dominates: the element cannot be nulled, phi_i clamps to 0
    a, b = 0.05 * np.exp(0.4j), 0.9987 * np.exp(-1.1j)
    U = np.eye(2, dtype=complex)
    U[:, 0] = [a, b]
    phi_i, _, W = null_with_Z(U, 0, 1, theta)
    assert phi_i == 0.0
    analytic = abs(np.cos(2 * theta)) * abs(b) - np.sin(2 * theta) * abs(a)
    assert abs(W[1, 0]) == pytest.approx(analytic, abs=1e-12)
    assert abs(W[1, 0]) == pytest.approx(_brute_force_residual(a, b, theta, "left"), abs=1e-7)


def test_clamped_right_step_reaches_analytic_minimum():
    theta = theta_from_reflectivity(0.35)
    a, b = 0.99 * np.exp(0.2j), 0.1411 * np.exp(2.0j)
    U = np.eye(2, dtype=complex)
    U[1, :] = [a, b]
    phi_i, _, W = null_with_Zinv(U, 0, 1, theta)
    assert phi_i == 0.0
    analytic = abs(np.cos(2 * theta)) * abs(a) - np.sin(2 * theta) * abs(b)
    assert abs(W[1, 0]) == pytest.approx(analytic, abs=1e-12)
    assert abs(W[1, 0]) == pytest.approx(_brute_force_residual(a, b, theta, "right"), abs=1e-7)


def test_degenerate_and_limit_cases():
    # both entries zero: bar state
    assert left_nulling_phases(0, 0, 0.6) == (np.pi, 0.0)
    assert right_nulling_phases(0, 0, 0.6) == (np.pi, 0.0)
    # target already zero (left): full transmission of nothing needed, s = 0
    phi_i, _ = left_nulling_phases(0.6 + 0.8j, 0, 0.7)
    assert phi_i == pytest.approx(np.pi)
    # right: ratio |b/a| = 0 gives s = 1/sin(2 theta) >= 1, clamped to 0
    phi_i, _ = right_nulling_phases(1.0, 0.0, 0.7)
    assert phi_i == 0.0


def test_step_index_validation():
    with pytest.raises(ValueError):
        null_with_Z(np.eye(3), 0, 0)
    with pytest.raises(ValueError):
        null_with_Zinv(np.eye(3), 2, 0)


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi),
       thetas)
def test_migration_identity(phi_i, phi_e, g0, g1, theta):
    d0, d1 = np.exp(1j * g0), np.exp(1j * g1)
    Zinv = mzi_matrix(phi_i, phi_e, theta).conj().T
    lhs = Zinv @ np.diag([d0, d1])
    p_i, p_e, (e0, e1) = commute_inverse_through_diagonal(phi_i, phi_e, d0, d1)
    rhs = np.diag([e0, e1]) @ mzi_matrix(p_i, p_e, theta)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# --- whole decomposition ------------------------------------------------------------

def test_schedule_tiles_mesh():
    for n in range(2, 10):
        steps = nulling_schedule(n)
        assert len(steps) == n * (n - 1) // 2
        assert sorted(s.mzi for s in steps) == list(range(len(steps)))
        layout = clements_layout(n)
        for s in steps:
            assert layout[s.mzi][1] == s.top


def test_two_mode_example():
    U = mzi_matrix(1.2, 0.7, BALANCED)
    program = decompose(U, [BALANCED])
    assert fidelity_distance(U, reconstruct(program, [BALANCED])) < 1e-10


def test_one_mode_program():
    program = PhaseProgram(1, [], [], [0.3])
    np.testing.assert_allclose(reconstruct(program), [[np.exp(0.3j)]])
    assert decompose(np.array([[np.exp(0.3j)]])).output_phases[0] == pytest.approx(0.3)


@pytest.mark.parametrize("n", range(1, 9))
def test_ideal_round_trip_is_exact(n):
    Us = haar_random_unitaries(n, 50, seed=n)
    for rule in ("tailored", "ideal"):
        R = reconstruct_batch(*decompose_batch(Us, rule=rule))
        assert np.max(np.linalg.norm(R - Us, axis=(1, 2))) < 1e-10


def test_ideal_round_trip_n6_thousand():
    Us = haar_random_unitaries(6, 1000, seed=0)
    assert fidelity_distance(Us, reconstruct_batch(*decompose_batch(Us))).max() < 1e-9


def test_phase_ranges():
    phi_i, phi_e, out = decompose_batch(haar_random_unitaries(6, 100, seed=1), theta_from_reflectivity(0.45))
    assert phi_i.min() >= 0 and phi_i.max() <= 2 * np.pi
    for arr in (phi_e, out):
        assert arr.min() >= 0 and arr.max() < 2 * np.pi


def test_tailored_balanced_equals_ideal():
    Us = haar_random_unitaries(8, 100, seed=2)
    tailored = decompose_batch(Us, BALANCED)
    ideal = decompose_batch(Us, rule="ideal")
    for t, i in zip(tailored, ideal):
        assert np.max(np.abs(wrapped(t, i))) < 1e-10


@given(st.floats(0.3, 0.7), st.integers(0, 1000))
def test_tailored_self_consistency(r, seed):
    U = haar_random_unitary(5, seed)
    th = theta_from_reflectivity(r)
    program = decompose(U, th)
    d = fidelity_distance(U, reconstruct(program, th))
    if count_clamped(U, th) == 0:
        assert d < 1e-9


@pytest.mark.parametrize("r", [0.3, 0.45, 0.7])
def test_tailored_never_worse_than_naive_on_average(r):
    Us = haar_random_unitaries(6, 100, seed=3)
    th = theta_from_reflectivity(r)
    naive = fidelity_distance(Us, reconstruct_batch(*decompose_batch(Us), th))
    tailored = fidelity_distance(Us, reconstruct_batch(*decompose_batch(Us, th), th))
    assert tailored.mean() <= naive.mean()


def test_per_mzi_thetas_are_honoured():
    rng = np.random.default_rng(4)
    th = theta_from_reflectivity(rng.uniform(0.47, 0.53, 15))
    U = haar_random_unitary(6, 5)
    if count_clamped(U, th) == 0:
        assert fidelity_distance(U, reconstruct(decompose(U, th), th)) < 1e-9
    # a wrong model is visibly worse
    assert fidelity_distance(U, reconstruct(decompose(U, th), BALANCED)) > 1e-3


def test_naive_distance_grows_with_defect():
    Us = haar_random_unitaries(6, 100, seed=5)
    phases = decompose_batch(Us)
    means = [fidelity_distance(Us, reconstruct_batch(*phases, theta_from_reflectivity(r))).mean()
             for r in (0.5, 0.48, 0.45, 0.4)]
    assert means[0] < 1e-12
    assert all(x < y for x, y in zip(means, means[1:]))


def test_count_clamped():
    U = haar_random_unitary(6, 0)
    assert count_clamped(U, BALANCED) == 0
    assert count_clamped(U, theta_from_reflectivity(0.1)) > 0


def test_decompose_validates():
    with pytest.raises(ValueError):
        decompose(np.ones((2, 2)))
    with pytest.raises(ValueError):
        decompose(np.eye(3), [0.7, 0.7])
    with pytest.raises(ValueError):
        decompose(np.eye(3), 0.0)
    with pytest.raises(ValueError):
        decompose_batch(np.eye(3))


def test_program_json_round_trip():
    program = decompose_ideal(haar_random_unitary(4, 1))
    text = program.to_json()
    obj = json.loads(text)
    assert obj["n"] == 4 and len(obj["settings"]) == 6 and set(obj["settings"][0]) == {"mzi", "phi_i", "phi_e"}
    back = PhaseProgram.from_json(text)
    np.testing.assert_array_equal(back.phi_i, program.phi_i)
    np.testing.assert_array_equal(back.output_phases, program.output_phases)


def test_program_validation():
    with pytest.raises(ValueError):
        PhaseProgram(3, [0.0] * 2, [0.0] * 3, [0.0] * 3)
    with pytest.raises(ValueError):
        PhaseProgram(2, [np.nan], [0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        PhaseProgram.from_dict({"n": 3, "settings": [{"mzi": 0, "phi_i": 1, "phi_e": 0}], "output_phases": [0] * 3})
    with pytest.raises(ValueError):
        PhaseProgram.from_dict({"n": 2})
