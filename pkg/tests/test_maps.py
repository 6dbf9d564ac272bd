import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbtomo.charge_model import ChargeBasis, TargetModel, ground_state, solve_model
from cbtomo.tomography import (
    LevelCrossingError,
    adiabatic_transform,
    measurement_map_analytic,
    measurement_map_numeric,
    plan_configurations,
    true_density,
)
from cbtomo.tomography.maps import harmonic_level_count, visibility_cutoff

M50 = TargetModel(1.0, 50.0)
INTERNAL = ChargeBasis(7).internal()


def test_identity_transform():
    T = adiabatic_transform(M50, 50.0, INTERNAL)
    assert np.max(np.abs(T.matrix - np.eye(INTERNAL.dim))) <= 1e-12


@pytest.mark.parametrize("EJ", [10.0, 25.0, 49.0])
def test_transform_unitary(EJ):
    assert adiabatic_transform(M50, EJ, INTERNAL).unitarity_error() < 1e-8


def test_transform_carries_ground_state():
    T = adiabatic_transform(M50, 10.0, INTERNAL).matrix
    g50 = solve_model(M50, INTERNAL, k=1).ground_state.coefficients
    g10 = solve_model(M50.with_ej(10.0), INTERNAL, k=1).ground_state.coefficients
    assert abs(np.vdot(g10, T @ g50)) >= 1 - 1e-10


def test_transform_phases_validated():
    with pytest.raises(ValueError):
        adiabatic_transform(M50, 10.0, INTERNAL, phases=np.zeros(3))
    with pytest.raises(ValueError):
        adiabatic_transform(M50, 10.0, INTERNAL, levels=0)


def test_level_crossing_reported():
    # a strong cos 2phi term reorders bound levels along the sweep
    m = TargetModel(1.0, 50.0, 150.0)
    with pytest.raises(LevelCrossingError) as err:
        adiabatic_transform(m, 2.0, ChargeBasis(15), path_steps=32)
    assert err.value.levels == (1, 2)
    assert "levels 1 and 2" in str(err.value)


def test_identity_map_structure():
    M = measurement_map_numeric(adiabatic_transform(M50, 50.0, INTERNAL), 3, 3).tensor
    ref = np.zeros_like(M)
    for i in range(7):
        ref[i, i, i] = 1
    assert np.max(np.abs(M - ref)) <= 1e-12


def test_map_conjugation_symmetry():
    M = measurement_map_numeric(adiabatic_transform(M50, 17.0, INTERNAL), 7, 4).tensor
    assert np.array_equal(M, np.conj(np.swapaxes(M, 1, 2)))


def test_map_cutoffs_checked():
    T = adiabatic_transform(M50, 17.0, INTERNAL)
    with pytest.raises(ValueError):
        measurement_map_numeric(T, 7, INTERNAL.N + 1)


@pytest.mark.parametrize("EJ", np.linspace(10, 50, 5))
def test_map_complete_over_full_truncation(EJ):
    M = measurement_map_numeric(adiabatic_transform(M50, EJ, INTERNAL), INTERNAL.N, INTERNAL.N)
    assert M.completeness_error() <= 1e-10


def test_forward_model_at_full_truncation():
    g = solve_model(M50, INTERNAL, k=1).ground_state.coefficients
    rho = np.outer(g, g.conj())
    for EJ in np.linspace(10, 50, 9):
        M = measurement_map_numeric(adiabatic_transform(M50, EJ, INTERNAL), INTERNAL.N, INTERNAL.N)
        p = np.abs(solve_model(M50.with_ej(EJ), INTERNAL, k=1).ground_state.coefficients) ** 2
        assert np.max(np.abs(M.apply(rho) - p)) <= 1e-8


def test_forward_model_on_truncated_block():
    # the unresolved tail beyond |n| = 7 costs about 1e-8
    rho = true_density(M50, 7)
    worst = 0.0
    for EJ in np.linspace(10, 50, 21):
        M = measurement_map_numeric(adiabatic_transform(M50, EJ, INTERNAL), 7, 7)
        p = np.abs(solve_model(M50.with_ej(EJ), INTERNAL, k=1).ground_state.coefficients) ** 2
        worst = max(worst, np.max(np.abs(M.apply(rho) - p[INTERNAL.N - 7:INTERNAL.N + 8])))
    assert 1e-9 < worst < 2e-8


def test_bound_level_map_decays():
    # within the levels bound at EJ = 10 the map is confined to |n| <= 2, |j|, |k| <= 5
    T = adiabatic_transform(M50, 10.0, INTERNAL, levels=2)
    M = measurement_map_numeric(T, 7, 7)
    outer_n = np.abs(M.charges) > 2
    jk = np.abs(M.basis.charges) > 5
    mask = outer_n[:, None, None] & (jk[None, :, None] & jk[None, None, :])
    assert np.max(np.abs(M.tensor[mask])) < 1e-6


def test_full_map_does_not_decay():
    M = measurement_map_numeric(adiabatic_transform(M50, 10.0, INTERNAL), 7, 7)
    outer_n = np.abs(M.charges) > 2
    jk = np.abs(M.basis.charges) > 5
    mask = outer_n[:, None, None] & (jk[None, :, None] & jk[None, None, :])
    assert np.max(np.abs(M.tensor[mask])) > 0.1


def test_analytic_map_identity_limit():
    # sampled Hermite functions are not complete on the integers, so the
    # approach to the delta structure stalls after about a dozen levels
    ref = np.zeros((7, 7, 7))
    for i in range(7):
        ref[i, i, i] = 1
    err = [np.max(np.abs(measurement_map_analytic(M50, 50.0, 3, 3, levels=p, basis=ChargeBasis(15)).tensor - ref))
           for p in (1, 2, 3, 5, 8, 12)]
    assert err == sorted(err, reverse=True)
    assert err[-1] < 0.25


def test_analytic_map_parity():
    M = measurement_map_analytic(M50, 10.0, 5, 2, basis=INTERNAL).tensor
    assert np.allclose(M, M[::-1, ::-1, ::-1], atol=1e-15)


def test_analytic_map_phase_drops_out():
    a = measurement_map_analytic(M50, 10.0, 5, 2, theta0=0.0, basis=INTERNAL).tensor
    b = measurement_map_analytic(M50, 10.0, 5, 2, theta0=1.234, basis=INTERNAL).tensor
    assert np.max(np.abs(a - b)) < 1e-15


def test_analytic_map_warns_outside_regime():
    M = measurement_map_analytic(M50, 2.0, 5, 2)
    assert any("harmonic regime" in w for w in M.warnings)
    assert not measurement_map_analytic(M50, 10.0, 5, 2).warnings


def test_analytic_matches_numeric_at_equal_levels():
    P = min(harmonic_level_count(M50), harmonic_level_count(M50.with_ej(10.0)))
    Mn = measurement_map_numeric(adiabatic_transform(M50, 10.0, INTERNAL, levels=P), 5, 2).tensor
    Ma = measurement_map_analytic(M50, 10.0, 5, 2, basis=INTERNAL).tensor
    assert np.max(np.abs(Mn - Ma)) <= 5e-2


def test_visibility_and_plan():
    assert visibility_cutoff(10.0) == 2
    assert visibility_cutoff(50.0) == 3
    plan = plan_configurations(50.0, 1.0, (10.0, 10.0), 5)
    assert plan.required == 25
    assert plan.recommended == 38
    assert plan_configurations(50.0, 1.0, (10.0, 50.0), 7, count=21).EJ_values.size == 21
    same = plan_configurations(50.0, 1.0, (50.0, 50.0), 5)
    assert same.required == int(np.ceil(121 / 7))
    with pytest.raises(ValueError, match="needs 25"):
        plan_configurations(50.0, 1.0, (10.0, 10.0), 5, cap=10)
    with pytest.raises(ValueError):
        plan_configurations(50.0, 1.0, (10.0, 60.0), 5)


@settings(max_examples=20, deadline=None)
@given(EJ0=st.floats(20.0, 60.0), frac=st.floats(0.2, 1.0), ng=st.floats(-0.5, 0.5))
def test_map_invariants_random(EJ0, frac, ng):
    m = TargetModel(1.0, EJ0, 0.0, ng)
    b = ChargeBasis(6).internal()
    T = adiabatic_transform(m, frac * EJ0, b)
    assert T.unitarity_error() < 1e-8
    M = measurement_map_numeric(T, b.N, b.N)
    assert M.completeness_error() < 1e-10
    assert np.array_equal(M.tensor, np.conj(np.swapaxes(M.tensor, 1, 2)))


@settings(max_examples=15, deadline=None)
@given(EJ=st.floats(10.0, 50.0), theta=st.lists(st.floats(-3.0, 3.0), min_size=19, max_size=19))
def test_ground_state_map_phase_insensitive(EJ, theta):
    # only the level-0 column of T acts on the ground state
    g = solve_model(M50, INTERNAL, k=1).ground_state.coefficients
    rho = np.outer(g, g.conj())
    T0 = adiabatic_transform(M50, EJ, INTERNAL)
    th = np.concatenate([[0.0], theta, np.zeros(INTERNAL.dim - 20)])
    T1 = adiabatic_transform(M50, EJ, INTERNAL, phases=th)
    a = measurement_map_numeric(T0, INTERNAL.N, INTERNAL.N).apply(rho)
    b = measurement_map_numeric(T1, INTERNAL.N, INTERNAL.N).apply(rho)
    assert np.max(np.abs(a - b)) < 1e-10


def test_ground_state_reachable():
    g = ground_state(M50)
    assert g.basis.N == 7
