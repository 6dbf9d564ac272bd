"""
Adiabatic transforms between two Josephson energies and the measurement maps
they induce on the charge diagonal.

Sweeping EJ slowly from EJ0 to EJi carries every eigenstate onto its
counterpart, T = sum_q exp(-i theta_q) |psi_q(EJi)><psi_q(EJ0)|. Measuring
charge afterwards samples

    rho'_n = sum_jk M[n, k, j] rho[j, k],   M[n, k, j] = T[n, j] conj(T[n, k]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..charge_model import (
    ChargeBasis,
    TargetModel,
    analytic_wavefunction,
    build_target_hamiltonian,
    eigensystem,
)

PATH_STEPS = 16


class LevelCrossingError(RuntimeError):
    """Bound levels change order along the EJ0 -> EJi path."""

    def __init__(self, message: str, levels: tuple[int, int], EJ: float):
        super().__init__(message)
        self.levels = levels
        self.EJ = EJ


@dataclass(frozen=True)
class AdiabaticTransform:
    """T on the internal basis, columns indexed by charge at EJ0."""

    EJ_start: float
    EJ_end: float
    phases: np.ndarray
    matrix: np.ndarray
    basis: ChargeBasis
    levels: int

    def unitarity_error(self) -> float:
        T = self.matrix
        return float(np.max(np.abs(T.conj().T @ T - np.eye(T.shape[0]))))


@dataclass(frozen=True)
class MeasurementMap:
    """Tensor M[n, k, j] for charges n (rows) and j, k of the reconstructed block.

    ``charges`` labels the n axis, ``basis`` the j, k axes.
    """

    tensor: np.ndarray
    charges: np.ndarray
    basis: ChargeBasis
    EJ: float
    warnings: tuple[str, ...] = field(default=())

    def slice(self, n: int) -> np.ndarray:
        return self.tensor[int(np.flatnonzero(self.charges == n)[0])]

    def apply(self, rho) -> np.ndarray:
        """Predicted diagonals rho'_n = sum_jk M[n,k,j] rho[j,k]."""
        r = np.asarray(getattr(rho, "entries", rho))
        return np.einsum("nkj,jk->n", self.tensor, r).real

    def completeness_error(self) -> float:
        """max |sum_n M[n] - I|; small only when n spans the full basis."""
        return float(np.max(np.abs(self.tensor.sum(axis=0) - np.eye(self.basis.dim))))


def barrier_height(model: TargetModel, points: int = 2048) -> float:
    """Top of -EJ cos(phi) - EJ2 cos(2 phi) over one period."""
    phi = np.linspace(-math.pi, math.pi, points)
    return float(np.max(-model.EJ * np.cos(phi) - model.EJ2 * np.cos(2 * phi)))


def _bound_count(model: TargetModel, energies: np.ndarray) -> int:
    return int(np.sum(energies < barrier_height(model)))


def adiabatic_transform(model: TargetModel, EJ_end: float, basis: ChargeBasis, phases=None,
                        levels: int | None = None, path_steps: int = PATH_STEPS) -> AdiabaticTransform:
    """Adiabatic transform from ``model`` (at its EJ) to ``model.with_ej(EJ_end)``.

    Parameters
    ----------
    model : TargetModel
        Model at the preparation point EJ0.
    EJ_end : float
    basis : ChargeBasis
        Internal truncation on which T is built.
    phases : array_like, optional
        Per-level angles theta_q, default zero.
    levels : int, optional
        Keep only the lowest ``levels`` projectors; T is then not unitary.
    path_steps : int
        Intermediate EJ values used to follow the levels.

    Raises
    ------
    LevelCrossingError
        If a level below the potential barrier at both ends stops being its
        own best overlap between neighbouring path points.
    """
    end = model.with_ej(EJ_end)
    es0 = eigensystem(build_target_hamiltonian(model, basis), basis=basis)
    es1 = eigensystem(build_target_hamiltonian(end, basis), basis=basis)
    d = basis.dim
    levels = d if levels is None else int(levels)
    if not 1 <= levels <= d:
        raise ValueError(f"levels must lie in 1..{d}, got {levels}")
    theta = np.zeros(d) if phases is None else np.asarray(phases, dtype=float)
    if theta.shape != (d,):
        raise ValueError(f"expected {d} phases, got shape {theta.shape}")

    if EJ_end != model.EJ:
        bound = min(_bound_count(model, es0.energies), _bound_count(end, es1.energies))
        _track_levels(model, EJ_end, basis, bound, path_steps)

    V0 = np.asarray(es0.vectors)[:, :levels]
    V1 = np.asarray(es1.vectors)[:, :levels]
    T = (V1 * np.exp(-1j * theta[:levels])) @ V0.conj().T
    if phases is None and not np.iscomplexobj(V0) and not np.iscomplexobj(V1):
        T = T.real
    T.setflags(write=False)
    return AdiabaticTransform(float(model.EJ), float(EJ_end), theta, T, basis, levels)


def _track_levels(model: TargetModel, EJ_end: float, basis: ChargeBasis, bound: int, steps: int) -> None:
    if bound == 0:
        return
    path = np.linspace(model.EJ, EJ_end, steps + 1)
    prev = None
    for EJ in path:
        v = np.asarray(eigensystem(build_target_hamiltonian(model.with_ej(EJ), basis), basis=basis).vectors)
        if prev is not None:
            ov = np.abs(v.conj().T @ prev[:, :bound])
            best = np.argmax(ov, axis=0)
            for q in range(bound):
                if best[q] != q:
                    raise LevelCrossingError(
                        f"levels {q} and {int(best[q])} swap between EJ = {prev_EJ:.6g} and EJ = {EJ:.6g}",
                        (q, int(best[q])), float(EJ))
        prev, prev_EJ = v, EJ


def measurement_map_numeric(T: AdiabaticTransform, N0: int, Ni: int) -> MeasurementMap:
    """M[n, k, j] = T[n, j] conj(T[n, k]) for |n| <= Ni and |j|, |k| <= N0."""
    b = T.basis
    if Ni > b.N or N0 > b.N:
        raise ValueError(f"cutoffs N0 = {N0}, Ni = {Ni} exceed the internal truncation {b.N}")
    rows = np.arange(b.N - Ni, b.N + Ni + 1)
    cols = np.arange(b.N - N0, b.N + N0 + 1)
    A = T.matrix[np.ix_(rows, cols)]
    M = np.einsum("nj,nk->nkj", A, A.conj())
    return MeasurementMap(M, np.arange(-Ni, Ni + 1), ChargeBasis(N0), T.EJ_end)


def harmonic_level_count(model: TargetModel) -> int:
    """Oscillator levels below the barrier, (p + 1/2) sqrt(8 EC EJ) < 2 EJ."""
    w = math.sqrt(8.0 * model.EC * model.EJ)
    return max(1, int(math.ceil(2.0 * model.EJ / w - 0.5)))


def measurement_map_analytic(model: TargetModel, EJ_end: float, N0: int, Ni: int, theta0: float = 0.0,
                             levels: int | None = None, basis: ChargeBasis | None = None) -> MeasurementMap:
    """Measurement map from Hermite-Gaussian eigenstates at both ends.

    The sum over oscillator levels stops at the number of levels bound at
    the smaller EJ unless ``levels`` is given; levels above the barrier have
    no oscillator counterpart. ``theta0`` is a common phase and drops out of
    M. EJ/EC below 5 at either end is recorded in ``warnings``.
    """
    end = model.with_ej(EJ_end)
    basis = ChargeBasis(max(N0, Ni) + 12) if basis is None else basis
    warn = []
    for m in (model, end):
        if m.EJ / m.EC < 5:
            warn.append(f"EJ/EC = {m.EJ / m.EC:.3g} is outside the harmonic regime (>= 5)")
    P = min(harmonic_level_count(model), harmonic_level_count(end)) if levels is None else int(levels)
    T = np.zeros((basis.dim, basis.dim), dtype=complex)
    for p in range(P):
        a = analytic_wavefunction(p, end, basis).coefficients
        b = analytic_wavefunction(p, model, basis).coefficients
        T += np.outer(a, b.conj())
    T *= np.exp(-1j * theta0)
    rows = np.arange(basis.N - Ni, basis.N + Ni + 1)
    cols = np.arange(basis.N - N0, basis.N + N0 + 1)
    A = T[np.ix_(rows, cols)]
    M = np.einsum("nj,nk->nkj", A, A.conj())
    return MeasurementMap(M, np.arange(-Ni, Ni + 1), ChargeBasis(N0), float(EJ_end), tuple(warn))


@dataclass(frozen=True)
class ConfigurationPlan:
    """Configuration grid with predicted visibility cutoffs and counts."""

    EJ_values: np.ndarray
    visibility: np.ndarray
    required: int
    recommended: int


def visibility_cutoff(EJ: float, EC: float = 1.0) -> int:
    """Largest visible charge after the sweep, round((EJ/EC)^(1/4))."""
    return int(round((EJ / EC) ** 0.25))


def plan_configurations(EJ0: float, EC: float, EJ_range: tuple[float, float], N0: int,
                        count: int | None = None, cap: int | None = None) -> ConfigurationPlan:
    """Uniform EJ grid over ``EJ_range`` with the count needed to fix rho.

    The requirement is the number of unknown entries (2 N0 + 1)^2 over the
    fewest visible charges per configuration, 2 min N_i + 1, rounded up;
    the recommended count adds a 1.5 margin and is used when ``count`` is
    not given.

    Raises
    ------
    ValueError
        If the range leaves (0, EJ0] or the requirement exceeds ``cap``.
    """
    lo, hi = map(float, EJ_range)
    if not (0 < lo <= hi <= EJ0):
        raise ValueError(f"EJ range {EJ_range} must lie within (0, EJ0 = {EJ0}]")
    dim = (2 * N0 + 1) ** 2
    n_min = min(visibility_cutoff(lo, EC), visibility_cutoff(hi, EC))
    required = math.ceil(dim / (2 * n_min + 1))
    recommended = math.ceil(1.5 * required)
    if cap is not None and required > cap:
        raise ValueError(f"range {EJ_range} needs {required} configurations, above the cap {cap}")
    count = recommended if count is None else int(count)
    EJs = np.linspace(lo, hi, count) if count > 1 else np.array([hi])
    vis = np.array([visibility_cutoff(e, EC) for e in EJs])
    return ConfigurationPlan(EJs, vis, required, recommended)
