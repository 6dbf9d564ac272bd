"""
Quench-and-Ramsey readout of a charge distribution through a probe qubit.

After the quench the target sits in the charge basis and a longitudinally
coupled probe picks up a phase that depends on n, so

    <sigma_x(t)> = sum_n p_n cos(omega_n t),    omega_n = delta_p + 2 g n.

Units follow :mod:`cbtomo.charge_model`: energies in EC, hbar = 1, so
frequencies are angular in EC and times are in 1/EC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .charge_model import ChargeBasis, ChargeWavefunction, TargetModel, build_target_hamiltonian

DEFAULT_SAMPLES = 2048
DEFAULT_PERIODS = 20
MIN_PERIODS = 10
COND_LIMIT = 1e8


class NyquistError(ValueError):
    """Time step too coarse for the highest peak frequency."""


class IllConditionedError(ValueError):
    """Harmonic design matrix cannot separate the peaks."""


@dataclass(frozen=True)
class ProbeSpec:
    """Probe gap ``delta_p`` and longitudinal coupling ``g`` (energies)."""

    delta_p: float
    g: float

    def __post_init__(self):
        if not self.delta_p > 0:
            raise ValueError(f"probe gap must be positive, got {self.delta_p}")
        if self.g == 0:
            raise ValueError("coupling g = 0 puts every peak at the same frequency")

    def omega(self, charges) -> np.ndarray:
        return self.delta_p + 2.0 * self.g * np.asarray(charges, dtype=float)


@dataclass(frozen=True)
class RamseyRecord:
    """Sampled <sigma_x(t)> for one readout setting."""

    times: np.ndarray
    sigma_x: np.ndarray
    residual_EJ: float
    probe: ProbeSpec
    noise_std: float = 0.0
    seed: int | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0] + self.dt)


@dataclass(frozen=True)
class SpectralPeaks:
    """Amplitudes at the known peak frequencies plus the raw periodogram.

    Attributes
    ----------
    charges, omega, amplitude : ndarray
        One entry per charge n of the extraction basis.
    measured_omega : ndarray
        Periodogram maximum within +-g of each omega_n, refined by a parabola
        through the three top bins; NaN where no local maximum exists.
    periodogram_omega, periodogram : ndarray
        Hann-windowed, 4x zero-padded amplitude spectrum, scaled so that a
        unit cosine on a bin centre peaks at 1.
    residual_EJ : float
    """

    charges: np.ndarray
    omega: np.ndarray
    amplitude: np.ndarray
    measured_omega: np.ndarray
    periodogram_omega: np.ndarray = field(repr=False)
    periodogram: np.ndarray = field(repr=False)
    residual_EJ: float = 0.0

    def __getitem__(self, n: int) -> tuple[float, float]:
        i = int(np.flatnonzero(self.charges == n)[0])
        return float(self.omega[i]), float(self.amplitude[i])

    def as_dict(self) -> dict[int, tuple[float, float]]:
        return {int(n): (float(w), float(a)) for n, w, a in zip(self.charges, self.omega, self.amplitude)}


def build_coupled_hamiltonian(model: TargetModel, probe: ProbeSpec, basis: ChargeBasis) -> np.ndarray:
    """H_t (x) I + g n (x) sigma_z + (delta_p/2) I (x) sigma_z.

    Product ordering is target-major: index 2 i + s with s = 0 for up
    (sigma_z = +1) and s = 1 for down.
    """
    Ht = build_target_hamiltonian(model, basis)
    sz = np.diag([1.0, -1.0])
    n = np.diag(basis.charges.astype(float))
    return (np.kron(Ht, np.eye(2)) + probe.g * np.kron(n, sz)
            + 0.5 * probe.delta_p * np.kron(np.eye(basis.dim), sz))


def analytic_sigma_x(p, probe: ProbeSpec, t, charges=None) -> np.ndarray:
    """sum_n p_n cos(omega_n t).

    ``p`` is ordered over ``charges``, by default the symmetric range
    -N..N implied by its length.
    """
    p = np.asarray(p, dtype=float)
    if charges is None:
        if p.size % 2 == 0:
            raise ValueError("probabilities over -N..N have odd length; pass charges explicitly")
        N = (p.size - 1) // 2
        charges = np.arange(-N, N + 1)
    t = np.asarray(t, dtype=float)
    return np.cos(np.multiply.outer(t, probe.omega(charges))) @ p


def default_time_grid(probe: ProbeSpec, samples: int = DEFAULT_SAMPLES,
                      periods: float = DEFAULT_PERIODS) -> np.ndarray:
    """``samples`` points over ``periods`` beat periods 2 pi/(2|g|), endpoint excluded."""
    T = periods * 2.0 * math.pi / (2.0 * abs(probe.g))
    return np.arange(samples) * (T / samples)


def _check_grid(t: np.ndarray) -> float:
    if t.ndim != 1 or t.size < 2:
        raise ValueError("time grid needs at least two samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0) or dt[0] <= 0:
        raise ValueError("time grid must be uniform and increasing")
    return float(dt[0])


def check_nyquist(t: np.ndarray, probe: ProbeSpec, charges) -> None:
    """Raise :class:`NyquistError` if dt >= pi / max|omega_n|."""
    dt = _check_grid(np.asarray(t, dtype=float))
    w = np.abs(probe.omega(charges))
    wmax = float(w.max())
    if dt * wmax >= math.pi:
        n = int(np.asarray(charges)[w.argmax()])
        raise NyquistError(
            f"time step {dt:.4g} aliases omega_{n} = {wmax:.6g}; need dt < {math.pi / wmax:.4g}")


class CoupledPropagator:
    """Exact propagation of prepared (x) (|down> + |up>)/sqrt(2).

    sigma_z is conserved, so each probe branch evolves under its own target
    Hamiltonian H_t +- (g n + delta_p/2) and is diagonalized once.
    """

    def __init__(self, prepared: ChargeWavefunction, readout_model: TargetModel,
                 probe: ProbeSpec, basis: ChargeBasis | None = None):
        basis = prepared.basis if basis is None else basis
        self.basis = basis
        self.psi = prepared.on_basis(basis).coefficients
        Ht = build_target_hamiltonian(readout_model, basis)
        shift = probe.g * basis.charges + 0.5 * probe.delta_p
        self.H_up = Ht + np.diag(shift)
        self.H_down = Ht - np.diag(shift)
        self._w_up, self._v_up = linalg.eigh(self.H_up)
        self._w_dn, self._v_dn = linalg.eigh(self.H_down)
        self._c_up = self._v_up.conj().T @ self.psi
        self._c_dn = self._v_dn.conj().T @ self.psi

    def branches(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Target amplitudes of the up and down branches, shape (len(t), dim)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = (np.exp(-1j * np.multiply.outer(t, self._w_up)) * self._c_up) @ self._v_up.T
        b = (np.exp(-1j * np.multiply.outer(t, self._w_dn)) * self._c_dn) @ self._v_dn.T
        return a, b

    def state(self, t) -> np.ndarray:
        """Full coupled amplitudes, target-major ordering, shape (len(t), 2 dim)."""
        a, b = self.branches(t)
        out = np.empty((a.shape[0], 2 * a.shape[1]), dtype=complex)
        out[:, 0::2] = a / math.sqrt(2.0)
        out[:, 1::2] = b / math.sqrt(2.0)
        return out

    def sigma_x(self, t) -> np.ndarray:
        a, b = self.branches(t)
        return np.einsum("ti,ti->t", a.conj(), b).real


def simulate_protocol(prepared: ChargeWavefunction, readout_model: TargetModel, probe: ProbeSpec,
                      grid=None, *, noise_std: float = 0.0, seed: int | None = None,
                      basis: ChargeBasis | None = None) -> RamseyRecord:
    """Ramsey signal after an instantaneous quench to ``readout_model``.

    Parameters
    ----------
    prepared : ChargeWavefunction
        Target state at t = 0.
    readout_model : TargetModel
        Target parameters during readout; ``EJ`` is the residual value.
    probe : ProbeSpec
    grid : array_like, optional
        Uniform time grid; :func:`default_time_grid` if omitted.
    noise_std : float
        Std of additive Gaussian noise on each sample, drawn from a Philox
        generator seeded with ``seed``. Noisy samples are clipped to [-1, 1].
    basis : ChargeBasis, optional
        Propagation basis. Defaults to the prepared basis at EJ = 0 and to
        its internal truncation otherwise, so that tunnelling out of the
        represented window is not cut off.

    Raises
    ------
    NyquistError
        If the grid step aliases any omega_n over the prepared basis.
    """
    t = default_time_grid(probe) if grid is None else np.asarray(grid, dtype=float)
    check_nyquist(t, probe, prepared.basis.charges)
    if basis is None:
        basis = prepared.basis if readout_model.EJ == 0 and readout_model.EJ2 == 0 else prepared.basis.internal()
    sx = CoupledPropagator(prepared, readout_model, probe, basis).sigma_x(t)
    if noise_std > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        sx = np.clip(sx + rng.normal(0.0, noise_std, sx.shape), -1.0, 1.0)
    else:
        sx = np.clip(sx, -1.0, 1.0)
    return RamseyRecord(t, sx, float(readout_model.EJ), probe, float(noise_std), seed)


def periodogram(record: RamseyRecord, pad: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed amplitude spectrum against angular frequency."""
    s = record.sigma_x
    w = np.hanning(s.size)
    F = np.abs(np.fft.rfft(s * w, pad * s.size)) * (2.0 / w.sum())
    omega = 2.0 * math.pi * np.fft.rfftfreq(pad * s.size, record.dt)
    return omega, F


def _refine_peaks(omega: np.ndarray, F: np.ndarray, targets: np.ndarray, half_width: float) -> np.ndarray:
    out = np.full(targets.shape, np.nan)
    step = omega[1] - omega[0]
    for i, w0 in enumerate(targets):
        idx = np.flatnonzero(np.abs(omega - w0) < half_width)
        idx = idx[(idx > 0) & (idx < F.size - 1)]
        if idx.size == 0:
            continue
        j = idx[np.argmax(F[idx])]
        if not (F[j] >= F[j - 1] and F[j] >= F[j + 1]):
            continue
        a, b, c = F[j - 1], F[j], F[j + 1]
        den = a - 2.0 * b + c
        shift = 0.5 * (a - c) / den if den != 0 else 0.0
        out[i] = omega[j] + shift * step
    return out


def extract_probabilities(record: RamseyRecord, basis: ChargeBasis) -> SpectralPeaks:
    """Harmonic least-squares amplitudes at omega_n for |n| <= basis.N.

    Raises
    ------
    ValueError
        If the record is shorter than 10 beat periods.
    IllConditionedError
        If the cosine design matrix has condition number above 1e8.
    """
    probe = record.probe
    min_T = MIN_PERIODS * 2.0 * math.pi / (2.0 * abs(probe.g))
    if record.duration < min_T * (1 - 1e-12):
        raise ValueError(
            f"record duration {record.duration:.4g} resolves fewer than {MIN_PERIODS} beat periods "
            f"(need >= {min_T:.4g})")
    charges = basis.charges
    omega = probe.omega(charges)
    X = np.cos(np.multiply.outer(record.times, omega))
    cond = np.linalg.cond(X)
    if not cond <= COND_LIMIT:
        raise IllConditionedError(f"harmonic design matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    A, *_ = linalg.lstsq(X, record.sigma_x)
    A = np.clip(A, 0.0, 1.0)
    pw, F = periodogram(record)
    measured = _refine_peaks(pw, F, np.abs(omega), abs(probe.g))
    return SpectralPeaks(charges, omega, A, measured, pw, F, record.residual_EJ)


def residual_ej_scan(prepared: ChargeWavefunction, probe: ProbeSpec, EJ_values, *,
                     model: TargetModel | None = None, grid=None, basis: ChargeBasis | None = None,
                     map_fn=map) -> list[SpectralPeaks]:
    """One extraction per residual readout EJ.

    ``model`` supplies EC and ng (EJ2 is dropped during readout). ``map_fn``
    lets callers pass an order-preserving parallel map.
    """
    model = TargetModel() if model is None else model
    basis = prepared.basis if basis is None else basis

    def one(EJ):
        readout = TargetModel(model.EC, float(EJ), 0.0, model.ng)
        return extract_probabilities(simulate_protocol(prepared, readout, probe, grid), basis)

    return list(map_fn(one, EJ_values))
