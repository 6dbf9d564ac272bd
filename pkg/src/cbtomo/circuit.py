"""
Four-junction flux-qubit probe coupled to a resonator and a transmon.

Node fluxes: 1, 2 the outer probe islands, 3 the probe island between the
two alpha junctions, 4 the resonator, 5 the transmon. The probe is
diagonalized in the charge basis of nodes 1-3 and its two lowest states
define the qubit; the couplings are matrix elements of the probe charge
combinations that multiply q4 and q5 in q^T C^-1 q / 2.

Energies are E/h in GHz, capacitances in fF, inductances in nH.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse import linalg as sla

from . import units
from .charge_model import fix_phase

DEFAULT_NP = 7
DENSE_THRESHOLD = 2000
MAX_DIMENSION = 40_000
DEGENERACY_GHZ = 1e-6
CONVERGENCE_RTOL = 5e-3


class DegenerateDoubletError(ValueError):
    """The two lowest probe levels are degenerate; the qubit is undefined."""


@dataclass(frozen=True)
class CircuitSpec:
    """Element values of the probe-resonator-transmon circuit.

    ``alpha_L`` scales the junction between nodes 3 and 1, ``alpha_R`` the
    one between nodes 2 and 3 that carries the loop flux ``f_p``.
    ``ng_p`` is the offset charge on node 3 in Cooper pairs.
    """

    EJp: float = 121.0
    EJt: float = 5.0
    alpha_L: float = 0.4
    alpha_R: float = 0.4
    f_p: float = 0.5
    ng_p: float = 0.0
    CJp: float = 8.0
    CJt: float = 4.0
    Ct: float = 40.0
    Cg: float = 0.0
    Ccp: float = 5.0
    Cct: float = 5.0
    Cr: float = 100.0
    Lr: float = 10.0

    def __post_init__(self):
        for name in ("CJp", "CJt", "Ct", "Cct", "Cr", "Lr"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("Cg", "Ccp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("alpha_L", "alpha_R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.EJp <= 0:
            raise ValueError(f"EJp must be positive, got {self.EJp}")

    @property
    def alpha(self) -> float:
        return self.alpha_L

    @property
    def delta_alpha(self) -> float:
        return self.alpha_R - self.alpha_L

    @property
    def Ct_sigma(self) -> float:
        return self.CJt + self.Ct

    @property
    def symmetric(self) -> bool:
        return self.alpha_L == self.alpha_R

    def with_param(self, name: str, value: float) -> "CircuitSpec":
        """Copy with one parameter changed.

        ``alpha`` sets both junctions and keeps the current asymmetry;
        ``delta_alpha`` sets alpha_R = alpha_L + value.
        """
        if name == "alpha":
            return replace(self, alpha_L=value, alpha_R=value + self.delta_alpha)
        if name == "delta_alpha":
            return replace(self, alpha_R=self.alpha_L + value)
        return replace(self, **{name: value})

    def to_dict(self) -> dict:
        return asdict(self)


def capacitance_matrix(spec: CircuitSpec) -> np.ndarray:
    """5 x 5 node capacitance matrix in fF.

    ``Cg`` adds to the node-3 diagonal; with Cg = 0 this is the bare
    circuit matrix.

    Raises
    ------
    ValueError
        If the matrix is not positive definite.
    """
    aL, aR, CJ = spec.alpha_L, spec.alpha_R, spec.CJp
    Ccp, Cct = spec.Ccp, spec.Cct
    C = np.array([
        [(1 + aL) * CJ, 0.0, -aL * CJ, 0.0, 0.0],
        [0.0, (1 + aR) * CJ, -aR * CJ, 0.0, 0.0],
        [-aL * CJ, -aR * CJ, (aL + aR) * CJ + Ccp + spec.Cg, -Ccp, 0.0],
        [0.0, 0.0, -Ccp, spec.Cr + Ccp + Cct, -Cct],
        [0.0, 0.0, 0.0, -Cct, Cct + spec.Ct_sigma],
    ])
    w = linalg.eigvalsh(C)
    if w[0] <= 0:
        raise ValueError(f"capacitance matrix is not positive definite (min eigenvalue {w[0]:.3e} fF)")
    return C


@dataclass(frozen=True)
class DerivedCapacitances:
    """Closed-form inverse-capacitance constants (fF unless noted).

    ``K`` holds the coefficients of q_i q_j in q^T C^-1 q / 2 keyed by node
    pair, in 1/fF; the diagonal keys carry the factor 1/2.
    """

    C0_sq: float
    Cp0: float
    Cp1: float
    Ccp_t: float
    Cr_t: float
    Ct_t: float
    ECt_GHz: float
    omega_r: float
    f_r_GHz: float
    Z_r: float
    K: dict = field(repr=False)


def derived_capacitances(spec: CircuitSpec) -> DerivedCapacitances:
    """Renormalized capacitances and resonator constants in closed form.

    Valid for alpha_L = alpha_R and Cg = 0. ``omega_r`` = 1/sqrt(Lr Cr_t)
    in rad/s, ``Z_r`` = sqrt(Lr / Cr_t) in ohm.

    Raises
    ------
    ValueError
        For an asymmetric loop, Cg != 0, or C0^2 = 0.
    """
    if not spec.symmetric or spec.Cg != 0:
        raise ValueError("closed forms assume alpha_L = alpha_R and Cg = 0; use capacitance_matrix instead")
    a, CJ, Ccp, Cct, Cr, CtS = spec.alpha, spec.CJp, spec.Ccp, spec.Cct, spec.Cr, spec.Ct_sigma
    C0 = (2 * (CtS * (Cr + Cct + Ccp) + Cct * (Cr + Ccp)) * a
          + (Ccp / CJ) * (CtS * (Cr + Cct) + Cr * Cct) * (1 + a))
    if C0 == 0:
        raise ValueError("C0^2 vanishes for this parameter set")
    Cp0 = (CtS * (Cr + Ccp + Cct) + Cct * (Cr + Ccp)) / CJ
    Cp1 = (Ccp / CJ**2) * ((Cct + Cr) * CtS + Cct * Cr)
    Ccp_t = Ccp * (Cct + CtS) / CJ
    Cr_t = CJ * C0 / ((CtS + Cct) * (2 * CJ * a + Ccp * (1 + a)))
    Ct_t = CJ * C0 / (2 * CJ * (Cr + Ccp + Cct) * a + Ccp * (Cct + Cr) * (1 + a))
    K = {
        (1, 1): (Cp0 * (2 + a) * a + Cp1 * (1 + a)) / (2 * (1 + a) * C0),
        (1, 2): Cp0 * a**2 / ((1 + a) * C0),
        (1, 3): Cp0 * a / C0,
        (3, 3): Cp0 * (1 + a) / (2 * C0),
        (4, 4): 1 / (2 * Cr_t),
        (5, 5): 1 / (2 * Ct_t),
        (1, 4): Ccp_t * a / C0,
        (3, 4): Ccp_t * (1 + a) / C0,
        (1, 5): Ccp * Cct * a / (CJ * C0),
        (3, 5): Ccp * Cct * (1 + a) / (CJ * C0),
        (4, 5): Cct * (2 * a + Ccp * (1 + a) / CJ) / C0,
    }
    K[(2, 2)], K[(2, 3)], K[(2, 4)], K[(2, 5)] = K[(1, 1)], K[(1, 3)], K[(1, 4)], K[(1, 5)]
    Lr, Crs = spec.Lr * units.nH, Cr_t * units.fF
    omega_r = 1.0 / math.sqrt(Lr * Crs)
    return DerivedCapacitances(
        C0_sq=C0, Cp0=Cp0, Cp1=Cp1, Ccp_t=Ccp_t, Cr_t=Cr_t, Ct_t=Ct_t,
        ECt_GHz=units.charging_energy_ghz(Ct_t),
        omega_r=omega_r, f_r_GHz=omega_r / (2 * math.pi) / units.GHz,
        Z_r=math.sqrt(Lr / Crs), K=K,
    )


def quadratic_form_matrix(K: dict) -> np.ndarray:
    """Symmetric matrix A with q^T A q / 2 equal to sum K_ij q_i q_j."""
    A = np.zeros((5, 5))
    for (i, j), v in K.items():
        if i == j:
            A[i - 1, i - 1] = 2 * v
        else:
            A[i - 1, j - 1] = A[j - 1, i - 1] = v
    return A


@dataclass(frozen=True)
class FluxQubitSubspace:
    """Lowest probe levels on the (2 Np + 1)^3 charge grid.

    ``states[:, q]`` is level q, flattened in (n1, n2, n3) C order.
    """

    energies: np.ndarray
    states: np.ndarray
    Np: int
    delta_p: float
    spec: CircuitSpec
    warnings: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int, int]:
        d = 2 * self.Np + 1
        return (d, d, d)

    def amplitudes(self, q: int) -> np.ndarray:
        return self.states[:, q].reshape(self.shape)


def _charge_grids(Np: int):
    n = np.arange(-Np, Np + 1, dtype=float)
    return [g.ravel() for g in np.meshgrid(n, n, n, indexing="ij")]


def probe_hamiltonian(spec: CircuitSpec, Np: int = DEFAULT_NP, flux_on: str = "right") -> sp.csr_matrix:
    """Sparse probe Hamiltonian in GHz.

    Charging part 2 e^2 (n - ng)^T C^-1_pp (n - ng) / h over nodes 1-3 with
    the offset on node 3; Josephson part
    EJp [(2 + aL + aR) - cos t1 - cos t2 - aL cos(t3 - t1) - aR cos(t2 - t3 + 2 pi f)].
    ``flux_on="left"`` moves the flux to the aL junction instead.
    """
    if flux_on not in ("right", "left"):
        raise ValueError(f"flux_on must be 'right' or 'left', got {flux_on!r}")
    d = 2 * Np + 1
    Ci = linalg.inv(capacitance_matrix(spec))[:3, :3]
    n1, n2, n3 = _charge_grids(Np)
    ns = np.stack([n1, n2, n3 - spec.ng_p])
    charging = 2.0 * units.E2_OVER_H_FF_GHZ * np.einsum("ia,ij,ja->a", ns, Ci, ns)

    I = sp.identity(d, format="csr")
    S = sp.diags(np.ones(d - 1), -1, format="csr")  # |n> -> |n+1>

    def kron3(a, b, c):
        return sp.kron(sp.kron(a, b), c, format="csr")

    S1, S2, S3 = kron3(S, I, I), kron3(I, S, I), kron3(I, I, S)
    phase = np.exp(2j * np.pi * spec.f_p)
    pl, pr = (phase, 1.0) if flux_on == "left" else (1.0, phase)
    # e^{i(t_a - t_b)} = S_a S_b^dagger
    hop = (S1 + S2 + spec.alpha_L * pl * (S3 @ S1.T) + spec.alpha_R * pr * (S2 @ S3.T))
    H = sp.diags(charging + spec.EJp * (2 + spec.alpha_L + spec.alpha_R)) - 0.5 * spec.EJp * (hop + hop.conj().T)
    H = H.tocsr()
    if np.max(np.abs(H.data.imag), initial=0.0) < 1e-14 * np.max(np.abs(H.data)):
        H = H.real.tocsr()
    return H


def _start_vector(dim: int) -> np.ndarray:
    # fixed, generic start vector keeps ARPACK runs reproducible
    return np.random.Generator(np.random.Philox(0)).standard_normal(dim)


def flux_qubit_eigensystem(spec: CircuitSpec, Np: int = DEFAULT_NP, k: int = 4, *,
                           dense_threshold: int = DENSE_THRESHOLD, max_dimension: int = MAX_DIMENSION,
                           check_convergence: bool = False, flux_on: str = "right") -> FluxQubitSubspace:
    """Lowest ``k`` probe levels and the gap delta_p = E1 - E0.

    Dense diagonalization up to ``dense_threshold`` states, Lanczos above.
    With ``check_convergence`` the gap is recomputed at Np + 2 and a shift
    above 0.5 % is recorded in ``warnings``.

    Raises
    ------
    ValueError
        If (2 Np + 1)^3 exceeds ``max_dimension``.
    """
    dim = (2 * Np + 1) ** 3
    if dim > max_dimension:
        raise ValueError(f"probe dimension {dim} (Np = {Np}) exceeds the cap {max_dimension}")
    H = probe_hamiltonian(spec, Np, flux_on)
    if dim <= dense_threshold:
        w, v = linalg.eigh(H.toarray(), subset_by_index=[0, k - 1])
    else:
        w, v = sla.eigsh(H, k=k, which="SA", tol=0, v0=_start_vector(dim))
        order = np.argsort(w, kind="stable")
        w, v = w[order], v[:, order]
    v = fix_phase(v)
    notes = []
    delta = float(w[1] - w[0])
    if check_convergence:
        ref = flux_qubit_eigensystem(spec, Np + 2, k, dense_threshold=dense_threshold,
                                     max_dimension=max(max_dimension, (2 * Np + 5) ** 3), flux_on=flux_on)
        shift = abs(ref.delta_p - delta) / max(abs(ref.delta_p), 1e-300)
        if shift > CONVERGENCE_RTOL:
            msg = f"gap changes by {100 * shift:.2f}% from Np = {Np} to {Np + 2}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    w.setflags(write=False)
    v.setflags(write=False)
    return FluxQubitSubspace(w, v, Np, delta, spec, tuple(notes))


@dataclass(frozen=True)
class CouplingSet:
    """Qubit gap and coupling constants, all as E/h in GHz.

    ``g_par_pt`` follows the scaling identity sqrt(4 e^2 Z_r / hbar) g_par_pc;
    ``g_par_pt_direct`` is the matrix element 2e <-|H_pt|+> kept for
    comparison. ``omega_r`` is in rad/s, ``f_r`` in GHz, ``Z_r`` in ohm.
    """

    delta_p: float
    g_par_pc: float
    g_perp_pc: complex
    g_par_pt: float
    g_perp_pt: complex
    g_perp_ct: float
    g_tp: float
    g_par_pt_direct: float
    Z_r: float
    omega_r: float
    f_r: float

    def row(self) -> dict:
        """Flat record with MHz couplings and perpendicular magnitudes."""
        return {
            "delta_p_GHz": self.delta_p,
            "g_par_pc_MHz": self.g_par_pc * 1e3,
            "g_perp_pc_MHz": abs(self.g_perp_pc) * 1e3,
            "g_par_pt_MHz": self.g_par_pt * 1e3,
            "g_perp_pt_MHz": abs(self.g_perp_pt) * 1e3,
            "g_perp_ct_MHz": self.g_perp_ct * 1e3,
            "g_tp_MHz": self.g_tp * 1e3,
        }


def coupling_operators(spec: CircuitSpec, Np: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of H_pc and H_pt in volts over the probe charge grid.

    H_pc = sum_i (C^-1)_i4 q_i and H_pt = sum_i (C^-1)_i5 q_i for the probe
    nodes, with q_i = 2e n_i (offset included on node 3).
    """
    Ci = linalg.inv(capacitance_matrix(spec) * units.fF)
    n1, n2, n3 = _charge_grids(Np)
    q = 2 * units.e * np.stack([n1, n2, n3 - spec.ng_p])
    return Ci[:3, 3] @ q, Ci[:3, 4] @ q


def resonator_constants(spec: CircuitSpec) -> tuple[float, float, float]:
    """Renormalized C_r (fF), Z_r (ohm) and omega_r (rad/s) from numeric C^-1."""
    Ci = linalg.inv(capacitance_matrix(spec))
    Cr_t = 1.0 / Ci[3, 3]
    L, C = spec.Lr * units.nH, Cr_t * units.fF
    return Cr_t, math.sqrt(L / C), 1.0 / math.sqrt(L * C)


def coupling_strengths(spec: CircuitSpec, Np: int = DEFAULT_NP, subspace: FluxQubitSubspace | None = None,
                       **eig_options) -> CouplingSet:
    """All coupling constants at one circuit point.

    Raises
    ------
    DegenerateDoubletError
        If the probe gap is below 1e-6 GHz.
    """
    sub = flux_qubit_eigensystem(spec, Np, **eig_options) if subspace is None else subspace
    if sub.delta_p < DEGENERACY_GHZ:
        raise DegenerateDoubletError(f"probe gap {sub.delta_p:.3e} GHz: qubit doublet is degenerate "
                                     f"(ng_p = {spec.ng_p}, delta_alpha = {spec.delta_alpha})")
    h_pc, h_pt = coupling_operators(spec, sub.Np)
    v0, v1 = sub.states[:, 0], sub.states[:, 1]
    _, Z_r, omega_r = resonator_constants(spec)
    Q_zpf = math.sqrt(units.hbar / (2 * Z_r))
    to_ghz = 1.0 / (units.h * units.GHz)

    def par(hd):
        # Re <-|H|+> = (H00 - H11)/2, independent of the eigenvector phases
        return 0.5 * (np.vdot(v0, hd * v0).real - np.vdot(v1, hd * v1).real)

    def perp(hd):
        return complex(np.vdot(v0, hd * v1))

    scale = math.sqrt(4 * units.e**2 * Z_r / units.hbar)
    g_par_pc = Q_zpf * par(h_pc) * to_ghz
    g_perp_pc = Q_zpf * perp(h_pc) * to_ghz
    Ci = linalg.inv(capacitance_matrix(spec) * units.fF)
    g_perp_ct = math.sqrt(2 * units.hbar * units.e**2 / Z_r) * Ci[3, 4] * to_ghz
    f_r = omega_r / (2 * math.pi) / units.GHz
    g_par_pt = scale * g_par_pc
    return CouplingSet(
        delta_p=sub.delta_p,
        g_par_pc=g_par_pc,
        g_perp_pc=g_perp_pc,
        g_par_pt=g_par_pt,
        g_perp_pt=scale * g_perp_pc,
        g_perp_ct=g_perp_ct,
        g_tp=effective_coupling(g_par_pt, g_perp_ct, g_par_pc, f_r),
        g_par_pt_direct=2 * units.e * par(h_pt) * to_ghz,
        Z_r=Z_r,
        omega_r=omega_r,
        f_r=f_r,
    )


def effective_coupling(g_par_pt: float, g_perp_ct: float, g_par_pc: float, f_r: float) -> float:
    """g_tp = g_par_pt + 2 g_perp_ct g_par_pc / f_r, all in the same frequency unit."""
    return g_par_pt + 2.0 * g_perp_ct * g_par_pc / f_r


SWEEP_PARAMETERS = ("ng_p", "Ccp", "alpha", "delta_alpha")


@dataclass(frozen=True)
class SweepRow:
    parameter: float
    couplings: CouplingSet | None
    delta_p: float

    def row(self) -> dict:
        if self.couplings is None:
            nan = float("nan")
            return {"delta_p_GHz": self.delta_p, "g_par_pc_MHz": nan, "g_perp_pc_MHz": nan, "g_par_pt_MHz": nan,
                    "g_perp_pt_MHz": nan, "g_perp_ct_MHz": nan, "g_tp_MHz": nan}
        return self.couplings.row()


def sweep(template: CircuitSpec, parameter: str, grid, Np: int = DEFAULT_NP, map_fn=map,
          **eig_options) -> list[SweepRow]:
    """Gap and couplings along one parameter.

    Points where the qubit doublet is degenerate keep their gap and carry
    no couplings (NaN in :meth:`SweepRow.row`).
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")

    def one(x):
        spec = template.with_param(parameter, float(x))
        sub = flux_qubit_eigensystem(spec, Np, **eig_options)
        try:
            return SweepRow(float(x), coupling_strengths(spec, Np, sub), sub.delta_p)
        except DegenerateDoubletError:
            return SweepRow(float(x), None, sub.delta_p)

    return list(map_fn(one, grid))
