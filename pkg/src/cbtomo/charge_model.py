"""
Single-junction Hamiltonians in the truncated charge basis.

The target circuit is a Cooper-pair box

    H = 4 EC (n - ng)^2 - EJ cos(phi) - EJ2 cos(2 phi)

written on relative-charge states |n>, n = -N..N. ``cos(phi)`` shifts the
charge by one Cooper pair and ``cos(2 phi)`` by two. Energies are in units of
EC throughout the library unless stated otherwise.

Functions
---------
build_target_hamiltonian
    Dense Hermitian matrix of the model on a charge basis.
eigensystem
    Lowest eigenpairs with a deterministic phase convention.
charge_probabilities
    |c_n|^2 of a charge wavefunction.
analytic_coefficient, analytic_wavefunction
    Hermite-Gaussian (harmonic oscillator) approximation of eigenstates.
plasma_frequency
    sqrt(8 EC EJ) - EC/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import hermite
from scipy import linalg

HERMITIAN_ATOL = 1e-12
# relative tolerance used to decide that two coefficient magnitudes tie
_PHASE_TIE_RTOL = 1e-8


@dataclass(frozen=True)
class TargetModel:
    """Cooper-pair-box parameters.

    Parameters
    ----------
    EC : float
        Charging energy, > 0.
    EJ : float
        Josephson energy of the cos(phi) term, >= 0.
    EJ2 : float
        Coefficient of the cos(2 phi) term, >= 0.
    ng : float
        Offset charge in Cooper pairs.
    """

    EC: float = 1.0
    EJ: float = 0.0
    EJ2: float = 0.0
    ng: float = 0.0

    def __post_init__(self):
        if not self.EC > 0:
            raise ValueError(f"EC must be positive, got {self.EC}")
        if self.EJ < 0:
            raise ValueError(f"EJ must be non-negative, got {self.EJ}")
        if self.EJ2 < 0:
            raise ValueError(f"EJ2 must be non-negative, got {self.EJ2}")

    @property
    def ratio(self) -> float:
        return self.EJ / self.EC

    @property
    def beta(self) -> float:
        """Width parameter (EJ / 8 EC)^(1/4) of the harmonic ground state."""
        return (self.EJ / (8.0 * self.EC)) ** 0.25

    def with_ej(self, EJ: float) -> "TargetModel":
        """Same model family at another EJ.

        The family keeps EJ2/EJ fixed, so a split junction tuned by flux
        rescales both harmonics together. A model with EJ = 0 keeps its EJ2.
        """
        EJ2 = self.EJ2 * EJ / self.EJ if self.EJ > 0 else self.EJ2
        return replace(self, EJ=float(EJ), EJ2=float(EJ2))


@dataclass(frozen=True)
class ChargeBasis:
    """Relative charge states n = -N..N."""

    N: int

    def __post_init__(self):
        if self.N < 0 or int(self.N) != self.N:
            raise ValueError(f"charge cutoff must be a non-negative integer, got {self.N}")

    @property
    def dim(self) -> int:
        return 2 * self.N + 1

    @property
    def charges(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def index(self, n: int) -> int:
        if abs(n) > self.N:
            raise IndexError(f"charge {n} outside basis |n| <= {self.N}")
        return int(n) + self.N

    def internal(self) -> "ChargeBasis":
        """Computation truncation 2N + 5 used to isolate truncation error."""
        return ChargeBasis(2 * self.N + 5)

    @classmethod
    def default_for(cls, model: TargetModel) -> "ChargeBasis":
        """Representation cutoff ceil(3 beta) + 2, never below 1."""
        return cls(max(1, math.ceil(3.0 * model.beta) + 2))


@dataclass(frozen=True)
class ChargeWavefunction:
    """Normalized amplitudes c_n over a charge basis."""

    coefficients: np.ndarray
    basis: ChargeBasis
    norm_atol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} coefficients, got shape {c.shape}")
        norm = np.vdot(c, c).real
        if abs(norm - 1.0) > self.norm_atol:
            raise ValueError(f"wavefunction not normalized: sum |c_n|^2 = {norm!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def normalized(cls, coefficients, basis: ChargeBasis) -> "ChargeWavefunction":
        c = np.asarray(coefficients, dtype=complex)
        return cls(c / np.linalg.norm(c), basis)

    @classmethod
    def charge_state(cls, n: int, basis: ChargeBasis) -> "ChargeWavefunction":
        c = np.zeros(basis.dim, dtype=complex)
        c[basis.index(n)] = 1.0
        return cls(c, basis)

    def __getitem__(self, n: int) -> complex:
        return complex(self.coefficients[self.basis.index(n)])

    def on_basis(self, basis: ChargeBasis) -> "ChargeWavefunction":
        """Embed into a larger basis (zero padding) or cut to a smaller one.

        Cutting discards the outer weight and renormalizes.
        """
        out = np.zeros(basis.dim, dtype=complex)
        m = min(basis.N, self.basis.N)
        out[basis.N - m:basis.N + m + 1] = self.coefficients[self.basis.N - m:self.basis.N + m + 1]
        return ChargeWavefunction.normalized(out, basis)


@dataclass(frozen=True)
class EigenSystem:
    """Lowest eigenpairs of a charge-basis Hamiltonian, energies ascending.

    ``vectors[:, q]`` is eigenstate q.
    """

    energies: np.ndarray
    vectors: np.ndarray
    basis: ChargeBasis

    def state(self, q: int) -> ChargeWavefunction:
        return ChargeWavefunction(self.vectors[:, q], self.basis, norm_atol=1e-10)

    @property
    def ground_state(self) -> ChargeWavefunction:
        return self.state(0)

    def __len__(self):
        return len(self.energies)


def build_target_hamiltonian(model: TargetModel, basis: ChargeBasis) -> np.ndarray:
    """Dense Hamiltonian of ``model`` on ``basis``.

    Diagonal 4 EC (n - ng)^2, first off-diagonals -EJ/2, second off-diagonals
    -EJ2/2. The matrix is real symmetric, hence exactly Hermitian.
    """
    if basis.N < 1:
        raise ValueError("the target Hamiltonian needs a basis with N >= 1")
    n = basis.charges
    d = basis.dim
    H = np.diag(4.0 * model.EC * (n - model.ng) ** 2)
    off1 = np.full(d - 1, -0.5 * model.EJ)
    H += np.diag(off1, 1) + np.diag(off1, -1)
    if d > 2:
        off2 = np.full(d - 2, -0.5 * model.EJ2)
        H += np.diag(off2, 2) + np.diag(off2, -2)
    return H


def fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude coefficient of every column real positive.

    Magnitudes equal within a relative 1e-8 count as tied and the lowest
    index wins, so symmetric states get the same convention at any EJ.
    """
    v = np.array(vectors, dtype=complex if np.iscomplexobj(vectors) else float, copy=True)
    for q in range(v.shape[1]):
        mag = np.abs(v[:, q])
        i = np.flatnonzero(mag >= mag.max() * (1.0 - _PHASE_TIE_RTOL))[0]
        v[:, q] *= np.conj(v[i, q]) / abs(v[i, q])
    return v


def _lead_index(vectors: np.ndarray) -> np.ndarray:
    mag = np.abs(vectors)
    return np.array([np.flatnonzero(m >= m.max() * (1.0 - _PHASE_TIE_RTOL))[0] for m in mag.T])


def eigensystem(H: np.ndarray, k: int | None = None, basis: ChargeBasis | None = None) -> EigenSystem:
    """Lowest ``k`` eigenpairs of a Hermitian charge-basis matrix.

    Degenerate eigenvalues are ordered by the index of their largest
    coefficient; eigenvectors follow :func:`fix_phase`.

    Raises
    ------
    ValueError
        If ``H`` departs from Hermiticity by more than 1e-12 or ``k`` exceeds
        the dimension.
    """
    H = np.asarray(H)
    d = H.shape[0]
    if H.shape != (d, d):
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    asym = np.max(np.abs(H - H.conj().T)) if d else 0.0
    if asym > HERMITIAN_ATOL:
        raise ValueError(f"matrix is not Hermitian (max |H - H^dagger| = {asym:.3e})")
    if basis is None:
        if d % 2 == 0:
            raise ValueError("charge-basis matrices have odd dimension")
        basis = ChargeBasis((d - 1) // 2)
    elif basis.dim != d:
        raise ValueError(f"basis dimension {basis.dim} does not match matrix dimension {d}")
    k = d if k is None else int(k)
    if not 1 <= k <= d:
        raise ValueError(f"requested {k} eigenpairs from a {d}-dimensional matrix")

    Hs = H if not np.iscomplexobj(H) or np.max(np.abs(H.imag)) > 0 else H.real
    w, v = linalg.eigh(Hs)
    v = fix_phase(v)

    # stable order: energy, then (within degenerate groups) lead index;
    # the tie width stays near eigh rounding so real splittings keep their order
    scale = 1e-2 * max(1.0, float(np.max(np.abs(w))))
    lead = _lead_index(v)
    order = np.arange(d)
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and w[stop] - w[start] <= 1e-12 * scale:
            stop += 1
        if stop - start > 1:
            group = order[start:stop]
            order[start:stop] = group[np.argsort(lead[group], kind="stable")]
        start = stop
    order = order[:k]
    energies = w[order].copy()
    vectors = v[:, order].copy()
    energies.setflags(write=False)
    vectors.setflags(write=False)
    return EigenSystem(energies, vectors, basis)


def solve_model(model: TargetModel, basis: ChargeBasis, k: int | None = None) -> EigenSystem:
    """Shorthand for ``eigensystem(build_target_hamiltonian(model, basis), k, basis)``."""
    return eigensystem(build_target_hamiltonian(model, basis), k, basis)


def ground_state(model: TargetModel, basis: ChargeBasis | None = None) -> ChargeWavefunction:
    """Ground state computed on the internal truncation, then cut to ``basis``.

    The cut state is renormalized; the discarded weight is below the
    truncation tolerance for the default basis.
    """
    basis = ChargeBasis.default_for(model) if basis is None else basis
    gs = solve_model(model, basis.internal(), k=1).ground_state
    return gs.on_basis(basis)


def charge_probabilities(psi: ChargeWavefunction) -> np.ndarray:
    """p_n = |c_n|^2, ordered n = -N..N."""
    return np.abs(psi.coefficients) ** 2


def _hermite_gaussian(k: int, x: np.ndarray) -> np.ndarray:
    c = np.zeros(k + 1)
    c[k] = 1.0
    return np.exp(-0.5 * x**2) * hermite.hermval(x, c)


def analytic_wavefunction(k: int, model: TargetModel, basis: ChargeBasis | None = None) -> ChargeWavefunction:
    """Harmonic approximation of level ``k`` in the charge basis.

    c_n = i^k exp(-x^2/2) H_k(x), x = (n - ng)/beta, with H_k the physicists'
    Hermite polynomial, renormalized to unit norm over ``basis``.
    """
    if k < 0:
        raise ValueError(f"level index must be non-negative, got {k}")
    if model.EJ <= 0:
        raise ValueError("the harmonic approximation needs EJ > 0")
    basis = ChargeBasis.default_for(model) if basis is None else basis
    x = (basis.charges - model.ng) / model.beta
    f = _hermite_gaussian(k, x)
    norm = np.linalg.norm(f)
    if norm == 0:
        raise ValueError(f"level {k} has no weight on a basis with N = {basis.N}")
    return ChargeWavefunction((1j) ** k * f / norm, basis)


def analytic_coefficient(k: int, model: TargetModel, n: int, basis: ChargeBasis | None = None) -> complex:
    """Coefficient c_n^k of :func:`analytic_wavefunction`."""
    basis = ChargeBasis.default_for(model) if basis is None else basis
    return analytic_wavefunction(k, model, basis)[n]


def plasma_frequency(model: TargetModel) -> float:
    """sqrt(8 EC EJ) - EC/2. Non-positive values mean the regime is invalid."""
    if model.EJ <= 0:
        raise ValueError(f"plasma frequency needs EJ > 0, got {model.EJ}")
    return math.sqrt(8.0 * model.EC * model.EJ) - 0.5 * model.EC
