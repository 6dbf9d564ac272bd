import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import frozen
import oracles
from cbtomo.charge_model import (
    ChargeBasis,
    ChargeWavefunction,
    TargetModel,
    analytic_coefficient,
    analytic_wavefunction,
    build_target_hamiltonian,
    charge_probabilities,
    eigensystem,
    fix_phase,
    ground_state,
    plasma_frequency,
    solve_model,
)


def test_model_validation():
    with pytest.raises(ValueError):
        TargetModel(EC=0.0)
    with pytest.raises(ValueError):
        TargetModel(EJ=-1.0)
    with pytest.raises(ValueError):
        TargetModel(EJ2=-0.1)
    m = TargetModel(1.0, 50.0, 2.5, 0.3)
    assert m.ng == 0.3
    assert m.with_ej(10.0).EJ2 == pytest.approx(0.5)


def test_basis_dimensions():
    b = ChargeBasis(3)
    assert b.dim == 7
    assert list(b.charges) == [-3, -2, -1, 0, 1, 2, 3]
    assert b.index(-3) == 0 and b.index(3) == 6
    assert b.internal().N == 11
    # beta = (50/8)^(1/4) = 1.58, ceil(3 beta) + 2 = 7
    assert ChargeBasis.default_for(TargetModel(1.0, 50.0)).N == 7
    with pytest.raises(IndexError):
        b.index(4)


def test_wavefunction_norm_enforced():
    b = ChargeBasis(1)
    with pytest.raises(ValueError):
        ChargeWavefunction(np.array([1.0, 1.0, 0.0]), b)
    psi = ChargeWavefunction.normalized([1.0, 1.0, 0.0], b)
    assert np.linalg.norm(psi.coefficients) == pytest.approx(1.0, abs=1e-15)


def test_hamiltonian_charging_diagonal():
    H = build_target_hamiltonian(TargetModel(1.0, 0.0), ChargeBasis(2))
    assert np.array_equal(H, np.diag([16.0, 4.0, 0.0, 4.0, 16.0]))


def test_hamiltonian_offdiagonals():
    H = build_target_hamiltonian(TargetModel(1.0, 50.0, 2.5), ChargeBasis(4))
    assert np.all(np.diag(H, 1) == -25.0)
    assert np.all(np.diag(H, 2) == -1.25)
    assert np.all(np.diag(H, 3) == 0.0)
    assert np.array_equal(H, H.conj().T)


def test_hamiltonian_needs_cutoff():
    with pytest.raises(ValueError):
        build_target_hamiltonian(TargetModel(), ChargeBasis(0))


def test_hamiltonian_matches_oracle():
    H = build_target_hamiltonian(TargetModel(1.0, 17.0, 0.4, 0.3), ChargeBasis(6))
    assert np.allclose(H, oracles.cpb_hamiltonian(17.0, 6, 0.3, 0.4), atol=0, rtol=1e-15)


def test_eigensystem_rejects_non_hermitian():
    H = np.array([[0.0, 1.0], [1.0 + 1e-9, 0.0]])
    with pytest.raises(ValueError):
        eigensystem(H)


def test_eigensystem_charge_limit():
    es = solve_model(TargetModel(1.0, 0.0), ChargeBasis(3), k=3)
    assert es.energies[0] == 0.0
    assert es.ground_state.coefficients[3] == 1.0


def test_degenerate_pair_at_half_offset():
    es = solve_model(TargetModel(1.0, 0.0, ng=0.5), ChargeBasis(3), k=2)
    assert es.energies[0] == pytest.approx(1.0, abs=1e-12)
    assert es.energies[1] == pytest.approx(1.0, abs=1e-12)
    # tie broken by leading index: n = 0 first, then n = 1
    assert abs(es.vectors[3, 0]) == pytest.approx(1.0)
    assert abs(es.vectors[4, 1]) == pytest.approx(1.0)


def test_gap_near_plasma_frequency():
    es = solve_model(TargetModel(1.0, 50.0), ChargeBasis(20), k=2)
    gap = es.energies[1] - es.energies[0]
    assert gap == pytest.approx(plasma_frequency(TargetModel(1.0, 50.0)), rel=0.05)


def test_eigensystem_orthonormal_and_residual():
    m = TargetModel(1.0, 30.0, 1.0, 0.2)
    b = ChargeBasis(12)
    H = build_target_hamiltonian(m, b)
    es = eigensystem(H, basis=b)
    V = es.vectors
    assert np.max(np.abs(V.conj().T @ V - np.eye(b.dim))) < 1e-10
    norm = np.linalg.norm(H, 2)
    for q in range(b.dim):
        assert np.linalg.norm(H @ V[:, q] - es.energies[q] * V[:, q]) < 1e-10 * norm


def test_phase_convention():
    v = np.array([[0.1, -0.9j], [-0.9, 0.1]], dtype=complex)
    f = fix_phase(v)
    for q in range(2):
        i = np.argmax(np.abs(f[:, q]))
        assert f[i, q].imag == 0 and f[i, q].real > 0


def test_results_are_read_only():
    es = solve_model(TargetModel(1.0, 5.0), ChargeBasis(3))
    with pytest.raises(ValueError):
        es.energies[0] = 1.0


def test_probabilities_of_charge_state():
    p = charge_probabilities(ChargeWavefunction.charge_state(0, ChargeBasis(2)))
    assert list(p) == [0, 0, 1, 0, 0]


def test_ground_state_profile_at_50():
    psi = ground_state(TargetModel(1.0, 50.0))
    p = charge_probabilities(psi)
    assert p.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(p, p[::-1], atol=1e-14)
    c = psi.coefficients
    assert np.max(np.abs(c - c[::-1])) < 1e-10
    assert p[7] == pytest.approx(frozen.GS50_P0, abs=1e-12)
    assert p[8] / p[7] == pytest.approx(frozen.GS50_P1_OVER_P0, rel=1e-10)
    # the Gaussian estimate 1/(beta sqrt(pi)) lands close
    assert p[7] == pytest.approx(1 / (math.sqrt(2.5) * math.sqrt(math.pi)), abs=0.02)


def test_amplitude_ratio_near_gaussian_estimate():
    psi = ground_state(TargetModel(1.0, 50.0))
    c = psi.coefficients
    assert c[8] / c[7] == pytest.approx(frozen.GS50_C1_OVER_C0, rel=1e-10)
    assert c[8] / c[7] == pytest.approx(math.exp(-0.2), abs=0.02)


def test_analytic_coefficient_values():
    m = TargetModel(1.0, 50.0)
    assert analytic_coefficient(1, m, 0) == 0
    r = analytic_coefficient(0, m, 1) / analytic_coefficient(0, m, 0)
    assert r == pytest.approx(math.exp(-0.2), rel=1e-14)
    assert analytic_coefficient(1, m, 1) == pytest.approx(1j * abs(analytic_coefficient(1, m, 1)))
    with pytest.raises(ValueError):
        analytic_coefficient(-1, m, 0)
    with pytest.raises(ValueError):
        analytic_wavefunction(0, TargetModel(1.0, 0.0))


@pytest.mark.parametrize("EJ", [10.0, 20.0, 50.0])
def test_analytic_ground_state_matches_plain_gaussian(EJ):
    # overlap against an oracle Gaussian and oracle ground state
    m = TargetModel(1.0, EJ)
    a = analytic_wavefunction(0, m).coefficients
    n = np.arange(-a.size // 2 + 1, a.size // 2 + 1)
    ref = np.exp(-n**2 / (2 * m.beta**2))
    assert np.allclose(a, ref / np.linalg.norm(ref), atol=1e-15)
    g = oracles.ground_state(EJ, (a.size - 1) // 2)
    assert abs(np.vdot(a, ground_state(m).coefficients)) == pytest.approx(abs(a @ g), abs=1e-12)


def test_analytic_overlap_improves_with_ratio():
    ov = [abs(np.vdot(analytic_wavefunction(0, TargetModel(1.0, r)).coefficients,
                      ground_state(TargetModel(1.0, r)).coefficients)) for r in (10.0, 20.0, 30.0, 50.0)]
    assert ov == sorted(ov)
    assert ov[-1] >= 0.999


def test_analytic_excited_levels_track_numeric():
    m = TargetModel(1.0, 50.0)
    b = ChargeBasis(10)
    es = solve_model(m, b, k=3)
    for k in range(3):
        a = analytic_wavefunction(k, m, b).coefficients
        assert abs(np.vdot(a, es.vectors[:, k])) > 0.99


def test_plasma_frequency_examples():
    assert plasma_frequency(TargetModel(1.0, 50.0)) == pytest.approx(19.5)
    assert plasma_frequency(TargetModel(1.0, 8.0)) == pytest.approx(7.5)
    assert plasma_frequency(TargetModel(1.0, 0.03125)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        plasma_frequency(TargetModel(1.0, 0.0))


def test_projection_onto_smaller_basis_renormalizes():
    psi = ground_state(TargetModel(1.0, 50.0), ChargeBasis(10))
    small = psi.on_basis(ChargeBasis(2))
    assert np.linalg.norm(small.coefficients) == pytest.approx(1.0, abs=1e-14)
    big = small.on_basis(ChargeBasis(4))
    assert big.coefficients[0] == 0 and big.coefficients[2:7].tolist() == small.coefficients.tolist()


@settings(max_examples=60, deadline=None)
@given(EJ=st.floats(0.0, 50.0), EJ2=st.floats(0.0, 5.0), ng=st.floats(-1.0, 1.0))
def test_spectrum_periodic_in_offset(EJ, EJ2, ng):
    b = ChargeBasis(20)
    e0 = solve_model(TargetModel(1.0, EJ, EJ2, ng), b, k=4).energies
    e1 = solve_model(TargetModel(1.0, EJ, EJ2, ng + 1.0), b, k=4).energies
    assert np.max(np.abs(e0 - e1)) < 1e-10
    assert np.all(np.diff(e0) >= -1e-12)


def test_near_degenerate_pair_keeps_ascending_order():
    e = solve_model(TargetModel(1.0, 0.0, 1e-10, 2.0), ChargeBasis(20), k=3).energies
    assert e[1] < e[2]


@settings(max_examples=30, deadline=None)
@given(EJ=st.floats(0.0, 50.0), EJ2=st.floats(0.0, 5.0), ng=st.floats(-0.5, 0.5))
def test_hamiltonian_always_hermitian(EJ, EJ2, ng):
    H = build_target_hamiltonian(TargetModel(1.0, EJ, EJ2, ng), ChargeBasis(5))
    assert np.array_equal(H, H.conj().T)


@settings(max_examples=25, deadline=None)
@given(EJ=st.floats(0.5, 50.0))
def test_ground_state_parity(EJ):
    c = ground_state(TargetModel(1.0, EJ)).coefficients
    assert np.max(np.abs(c - c[::-1])) < 1e-10


@settings(max_examples=25, deadline=None)
@given(EJ=st.floats(0.0, 50.0))
def test_default_cutoff_converged(EJ):
    # energies are computed on the internal truncation of the default basis
    m = TargetModel(1.0, EJ)
    b = ChargeBasis.default_for(m)
    e = solve_model(m, b.internal(), k=1).energies[0]
    e3 = solve_model(m, ChargeBasis(b.N + 3).internal(), k=1).energies[0]
    assert abs(e - e3) < 1e-8


def test_representation_cutoff_alone_is_marginal():
    # diagonalizing directly at the default N misses 1e-8 near EJ/EC = 48
    m = TargetModel(1.0, 48.0)
    b = ChargeBasis.default_for(m)
    e = solve_model(m, b, k=1).energies[0]
    e3 = solve_model(m, ChargeBasis(b.N + 3), k=1).energies[0]
    assert 1e-9 < abs(e - e3) < 1e-7


@settings(max_examples=25, deadline=None)
@given(EJ=st.floats(0.0, 60.0), EJ2=st.floats(0.0, 3.0), ng=st.floats(-0.5, 0.5))
def test_probabilities_sum_to_one(EJ, EJ2, ng):
    p = charge_probabilities(ground_state(TargetModel(1.0, EJ, EJ2, ng)))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
