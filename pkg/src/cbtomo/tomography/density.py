"""Density matrices over charge states and the distances used to compare them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..charge_model import ChargeBasis, ChargeWavefunction

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-10


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace matrix rho_jk over charges -N0..N0.

    Construction checks Hermiticity and trace; positivity is reported by
    :attr:`min_eigenvalue` and :meth:`is_physical` because raw linear
    reconstructions are allowed to be indefinite.
    """

    entries: np.ndarray
    basis: ChargeBasis

    def __post_init__(self):
        r = np.array(self.entries, dtype=complex)
        if r.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"expected shape {(self.basis.dim,) * 2}, got {r.shape}")
        herm = np.max(np.abs(r - r.conj().T))
        if herm > HERMITIAN_ATOL:
            raise ValueError(f"density matrix not Hermitian (max |rho - rho^dagger| = {herm:.3e})")
        tr = np.trace(r).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {tr!r} differs from 1")
        r.setflags(write=False)
        object.__setattr__(self, "entries", r)

    @classmethod
    def pure(cls, psi: ChargeWavefunction) -> "DensityMatrix":
        c = psi.coefficients
        return cls(np.outer(c, c.conj()), psi.basis)

    @classmethod
    def from_matrix(cls, rho, basis: ChargeBasis | None = None) -> "DensityMatrix":
        """Wrap a matrix after exact symmetrization and trace normalization."""
        r = np.asarray(rho, dtype=complex)
        r = 0.5 * (r + r.conj().T)
        r = r / np.trace(r).real
        basis = ChargeBasis((r.shape[0] - 1) // 2) if basis is None else basis
        return cls(r, basis)

    @property
    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh(self.entries)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).real.copy()

    def is_physical(self) -> bool:
        return self.min_eigenvalue >= -PSD_ATOL

    def check(self) -> dict[str, float]:
        """Hermiticity, trace and positivity violations."""
        r = self.entries
        return {
            "hermitian": float(np.max(np.abs(r - r.conj().T))),
            "trace": float(abs(np.trace(r).real - 1.0)),
            "min_eigenvalue": self.min_eigenvalue,
        }

    def __getitem__(self, jk: tuple[int, int]) -> complex:
        j, k = jk
        return complex(self.entries[self.basis.index(j), self.basis.index(k)])


def project_physical(rho_raw, basis: ChargeBasis | None = None) -> DensityMatrix:
    """Nearest positive semidefinite unit-trace matrix by eigenvalue clipping.

    Negative eigenvalues are set to zero and the rest rescaled to sum to 1.
    A physical input comes back unchanged up to rounding.

    Raises
    ------
    ValueError
        If the input is not Hermitian (to 1e-8) or has no positive
        eigenvalue.
    """
    r = np.asarray(rho_raw.entries if isinstance(rho_raw, DensityMatrix) else rho_raw, dtype=complex)
    if isinstance(rho_raw, DensityMatrix) and basis is None:
        basis = rho_raw.basis
    herm = np.max(np.abs(r - r.conj().T))
    if herm > 1e-8:
        raise ValueError(f"projection needs a Hermitian matrix (violation {herm:.3e})")
    r = 0.5 * (r + r.conj().T)
    w, v = linalg.eigh(r)
    if not np.any(w > 0):
        raise ValueError("no positive eigenvalue; cannot form a density matrix")
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    out = (v * w) @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    out /= np.trace(out).real
    if np.max(np.abs(out.imag)) == 0:
        out = out.real.astype(complex)
    return DensityMatrix(out, ChargeBasis((r.shape[0] - 1) // 2) if basis is None else basis)


def _pair(rho, sigma) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(rho.entries if isinstance(rho, DensityMatrix) else rho)
    b = np.asarray(sigma.entries if isinstance(sigma, DensityMatrix) else sigma)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def hilbert_schmidt_distance(rho, sigma) -> float:
    """Squared Frobenius distance sum_jk |rho_jk - sigma_jk|^2."""
    a, b = _pair(rho, sigma)
    return float(np.sum(np.abs(a - b) ** 2))


def diagonal_distance(rho, sigma) -> float:
    """Signed mean of the diagonal differences, sum_n (rho_nn - sigma_nn) / dim.

    Zero for any pair of unit-trace matrices; kept because it is the
    quantity tabulated in model-comparison runs.
    """
    a, b = _pair(rho, sigma)
    return float(np.sum(np.diag(a).real - np.diag(b).real) / a.shape[0])
