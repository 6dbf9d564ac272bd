"""
Least-squares reconstruction of a density matrix from post-sweep charge
diagonals.

Every admitted measurement gives one real linear equation in rho. Two
solvers are provided: an unconstrained linear fit over a real
parametrization of Hermitian unit-trace matrices followed by eigenvalue
clipping, and a Levenberg-Marquardt fit over rho = L L^dagger / tr(L L^dagger)
which is positive by construction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from ..charge_model import ChargeBasis, TargetModel, ground_state, solve_model
from .density import DensityMatrix, project_physical
from .maps import MeasurementMap, adiabatic_transform, measurement_map_analytic, measurement_map_numeric

DEFAULT_FLOOR = 1e-4
DEFAULT_RCOND = 1e-7
DEFAULT_GN_MAX_ITER = 200
# columns with norm below this fraction of the largest are not identifiable
_NULL_COLUMN_RTOL = 1e-14


class UnderdeterminedError(ValueError):
    """Fewer admitted equations than identifiable parameters."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


class ConvergenceError(RuntimeError):
    """Damped Gauss-Newton stopped without meeting its tolerance."""

    def __init__(self, message: str, best: DensityMatrix, cost: float):
        super().__init__(message)
        self.best = best
        self.cost = cost


@dataclass(frozen=True)
class MeasuredConfig:
    """Diagonals measured after sweeping to ``EJ``.

    ``visibility`` is the planned cutoff N_i, kept as metadata; admission of
    individual values is decided by the problem's floor.
    """

    EJ: float
    charges: tuple[int, ...]
    diagonals: tuple[float, ...]
    visibility: int | None = None

    def __post_init__(self):
        d = np.asarray(self.diagonals, dtype=float)
        if len(self.charges) != d.size:
            raise ValueError("charges and diagonals differ in length")
        if np.any(d < 0) or np.any(d > 1):
            raise ValueError(f"measured diagonals at EJ = {self.EJ} leave [0, 1]")
        if d.sum() > 1 + 1e-6:
            raise ValueError(f"measured diagonals at EJ = {self.EJ} sum to {d.sum():.9g} > 1")


@dataclass(frozen=True)
class ReconstructionProblem:
    """Measured configurations plus the model family used to build maps.

    Parameters
    ----------
    fit_model : TargetModel
        Model at the preparation point EJ0; configurations use
        ``fit_model.with_ej``.
    configs : tuple of MeasuredConfig
    N0 : int
        Reconstructed block is |j|, |k| <= N0.
    mode : {"linear", "cholesky"}
    floor : float
        Measured values below this are not admitted.
    rcond : float
        Relative singular-value cutoff of the linear solve.
    gn_max_iter : int
    allow_underdetermined : bool
        Solve minimum-norm instead of raising when equations are too few.
    weights : tuple of float, optional
        Per-configuration weights, e.g. 1/sigma^2.
    """

    fit_model: TargetModel
    configs: tuple[MeasuredConfig, ...]
    N0: int
    mode: str = "linear"
    floor: float = DEFAULT_FLOOR
    rcond: float = DEFAULT_RCOND
    gn_max_iter: int = DEFAULT_GN_MAX_ITER
    allow_underdetermined: bool = False
    weights: tuple[float, ...] | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in ("linear", "cholesky"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if self.weights is not None and len(self.weights) != len(self.configs):
            raise ValueError("one weight per configuration expected")

    @property
    def basis(self) -> ChargeBasis:
        return ChargeBasis(self.N0)

    @property
    def internal_basis(self) -> ChargeBasis:
        return self.basis.internal()

    @property
    def EJ_values(self) -> np.ndarray:
        return np.array([c.EJ for c in self.configs])

    def with_diagonals(self, diagonals) -> "ReconstructionProblem":
        """Same problem with every configuration's diagonals replaced.

        Values are clipped to [0, 1] so that model predictions with rounding
        noise can be fed back as measurements.
        """
        configs = tuple(replace(c, diagonals=tuple(float(x) for x in np.clip(d, 0.0, 1.0)))
                        for c, d in zip(self.configs, diagonals))
        return replace(self, configs=configs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_model"] = asdict(self.fit_model)
        d["configs"] = [dict(EJ=c.EJ, charges=list(c.charges), diagonals=list(c.diagonals),
                             visibility=c.visibility) for c in self.configs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionProblem":
        d = dict(d)
        d["fit_model"] = TargetModel(**d["fit_model"])
        d["configs"] = tuple(MeasuredConfig(c["EJ"], tuple(c["charges"]), tuple(c["diagonals"]), c.get("visibility"))
                             for c in d["configs"])
        if d.get("weights") is not None:
            d["weights"] = tuple(d["weights"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ReconstructionProblem":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ReconstructionResult:
    """Reconstructed state and fit diagnostics.

    ``rho`` is physical; ``rho_raw`` is the linear solution before
    projection. ``residual`` is the weighted sum of squared misfits of
    ``rho`` over all admitted equations, ``config_residuals`` the same per
    configuration.
    """

    rho: DensityMatrix
    rho_raw: np.ndarray
    residual: float
    config_residuals: np.ndarray
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "rho": _complex_pairs(self.rho.entries),
            "rho_raw": _complex_pairs(self.rho_raw),
            "N0": self.rho.basis.N,
            "residual": self.residual,
            "config_residuals": self.config_residuals.tolist(),
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionResult":
        basis = ChargeBasis(d["N0"])
        return cls(DensityMatrix(_from_pairs(d["rho"]), basis), _from_pairs(d["rho_raw"]), d["residual"],
                   np.asarray(d["config_residuals"]), d["diagnostics"])


def _complex_pairs(a) -> list:
    a = np.asarray(a)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def _from_pairs(rows) -> np.ndarray:
    a = np.asarray(rows, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def simulate_measurements(true_model: TargetModel, EJ_values, N0: int, *, window: int | None = None,
                          noise_std: float = 0.0, seed: int | None = None, visibility=None,
                          fit_model: TargetModel | None = None, **options) -> ReconstructionProblem:
    """Noiseless or noisy charge diagonals of the ground state at each EJ.

    Slow sweeps keep the system in its ground state, so the diagonal after
    the sweep to EJi is |<n|GS(EJi)>|^2, recorded for |n| <= ``window``
    (default N0). Noise is additive Gaussian from a Philox generator seeded
    with ``seed``, clipped to [0, 1].
    """
    window = N0 if window is None else int(window)
    internal = ChargeBasis(N0).internal()
    rng = np.random.Generator(np.random.Philox(seed)) if noise_std > 0 else None
    configs = []
    vis = [None] * len(EJ_values) if visibility is None else list(visibility)
    for EJ, v in zip(EJ_values, vis):
        gs = solve_model(true_model.with_ej(EJ), internal, k=1).ground_state.coefficients
        p = np.abs(gs[internal.N - window:internal.N + window + 1]) ** 2
        if rng is not None:
            p = np.clip(p + rng.normal(0.0, noise_std, p.shape), 0.0, 1.0)
            if p.sum() > 1:
                p = p / p.sum()
        configs.append(MeasuredConfig(float(EJ), tuple(range(-window, window + 1)), tuple(p.tolist()),
                                      None if v is None else int(v)))
    fit = true_model if fit_model is None else fit_model
    meta = {"noise_std": noise_std, "seed": seed, "generator": "numpy Philox"} if noise_std > 0 else {}
    if noise_std > 0 and "weights" not in options:
        options["weights"] = tuple([1.0 / noise_std**2] * len(configs))
    return ReconstructionProblem(fit, tuple(configs), N0, metadata=meta, **options)


def build_maps(problem: ReconstructionProblem, kind: str = "numeric", phases=None, map_fn=map) -> list[MeasurementMap]:
    """One measurement map per configuration, for the measured charge window.

    ``phases`` is an optional callable EJ -> per-level angles (numeric maps)
    or a scalar common phase (analytic maps).
    """
    internal = problem.internal_basis

    def one(cfg: MeasuredConfig) -> MeasurementMap:
        Ni = max(abs(n) for n in cfg.charges)
        if kind == "numeric":
            th = None if phases is None else phases(cfg.EJ)
            T = adiabatic_transform(problem.fit_model, cfg.EJ, internal, th)
            return measurement_map_numeric(T, problem.N0, Ni)
        if kind == "analytic":
            return measurement_map_analytic(problem.fit_model, cfg.EJ, problem.N0, Ni,
                                            theta0=0.0 if phases is None else float(phases), basis=internal)
        raise ValueError(f"unknown map kind {kind!r}")

    return list(map_fn(one, problem.configs))


class _Parametrization:
    """Real coordinates of a Hermitian d x d matrix.

    Order: d diagonal entries, then Re and Im of the upper triangle
    (row-major). The centre diagonal is eliminated by the trace constraint.
    """

    def __init__(self, d: int):
        self.d = d
        self.iu = np.triu_indices(d, 1)
        self.centre = d // 2
        N = d // 2
        self.names = ([f"rho[{j - N},{j - N}]" for j in range(d)]
                      + [f"Re rho[{j - N},{k - N}]" for j, k in zip(*self.iu)]
                      + [f"Im rho[{j - N},{k - N}]" for j, k in zip(*self.iu)])

    def design(self, A: np.ndarray) -> np.ndarray:
        """Columns for tensors A[e, k, j] with row e predicting sum A[e,k,j] rho[j,k]."""
        j, k = self.iu
        diag = np.einsum("ejj->ej", A).real
        upper = A[:, k, j]
        return np.hstack([diag, 2.0 * upper.real, -2.0 * upper.imag])

    def matrix(self, x: np.ndarray) -> np.ndarray:
        d = self.d
        m = len(self.iu[0])
        rho = np.diag(x[:d]).astype(complex)
        vals = x[d:d + m] + 1j * x[d + m:]
        rho[self.iu] = vals
        rho[self.iu[1], self.iu[0]] = vals.conj()
        return rho

    def vector(self, rho: np.ndarray) -> np.ndarray:
        u = rho[self.iu]
        return np.concatenate([np.diag(rho).real, u.real, u.imag])


def _assemble(problem: ReconstructionProblem, maps):
    """Stacked map rows, measurements, weights and config index of admitted equations."""
    if len(maps) != len(problem.configs):
        raise ValueError(f"{len(maps)} maps for {len(problem.configs)} configurations")
    rows, b, w, owner = [], [], [], []
    for i, (cfg, M) in enumerate(zip(problem.configs, maps)):
        if M.basis.N != problem.N0:
            raise ValueError(f"map at EJ = {cfg.EJ} has N0 = {M.basis.N}, problem has {problem.N0}")
        wi = 1.0 if problem.weights is None else float(problem.weights[i])
        for n, val in zip(cfg.charges, cfg.diagonals):
            if val < problem.floor:
                continue
            idx = np.flatnonzero(M.charges == n)
            if idx.size == 0:
                raise ValueError(f"map at EJ = {cfg.EJ} lacks charge {n}")
            rows.append(M.tensor[idx[0]])
            b.append(val)
            w.append(wi)
            owner.append(i)
    if not rows:
        raise UnderdeterminedError("no measured value passes the admission floor", {"equations": 0})
    return np.array(rows), np.array(b), np.sqrt(np.array(w)), np.array(owner)


def _linear_solve(problem: ReconstructionProblem, A, b, sw):
    d = problem.basis.dim
    par = _Parametrization(d)
    D = par.design(A)
    c = par.centre
    # rho_cc = 1 - sum_{j != c} rho_jj
    rhs = b - D[:, c]
    Dt = D.copy()
    for j in range(d):
        if j != c:
            Dt[:, j] -= D[:, c]
    keep = np.ones(D.shape[1], dtype=bool)
    keep[c] = False
    norms = np.linalg.norm(Dt, axis=0)
    null = keep & (norms <= _NULL_COLUMN_RTOL * norms[keep].max())
    active = keep & ~null
    X = Dt[:, active] * sw[:, None]
    y = rhs * sw
    sv = linalg.svdvals(X)
    rank_full = int(np.sum(sv > sv[0] * max(X.shape) * np.finfo(float).eps))
    report = {
        "equations": int(X.shape[0]),
        "parameters": int(X.shape[1]),
        "unconstrained_parameters": [par.names[i] for i in np.flatnonzero(null)],
        "rank": rank_full,
        "rank_used": int(np.sum(sv > sv[0] * problem.rcond)),
        "singular_value_max": float(sv[0]),
        "singular_value_min": float(sv[-1]),
        "condition": float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf"),
        "determined": bool(X.shape[0] >= X.shape[1]),
    }
    if not report["determined"] and not problem.allow_underdetermined:
        raise UnderdeterminedError(
            f"{X.shape[0]} admitted equations for {X.shape[1]} identifiable parameters (rank {rank_full})", report)
    sol, *_ = linalg.lstsq(X, y, cond=problem.rcond)
    x = np.zeros(D.shape[1])
    x[active] = sol
    x[c] = 1.0 - (x[:d].sum() - x[c])
    return par.matrix(x), report


def _predict(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("ekj,jk->e", A, rho).real


def _cholesky_params(L: np.ndarray):
    d = L.shape[0]
    il = np.tril_indices(d, -1)
    return np.concatenate([np.diag(L).real, L[il].real, L[il].imag])


def _cholesky_matrix(p: np.ndarray, d: int) -> np.ndarray:
    il = np.tril_indices(d, -1)
    m = len(il[0])
    L = np.diag(p[:d]).astype(complex)
    L[il] = p[d:d + m] + 1j * p[d + m:]
    return L


def _cholesky_residual_jacobian(p, A, b, sw, d):
    L = _cholesky_matrix(p, d)
    R = L @ L.conj().T
    s = np.trace(R).real
    rho = R / s
    f = _predict(A, rho)
    r = (f - b) * sw
    G1 = A @ L.conj()
    G2 = np.transpose(A, (0, 2, 1)) @ L
    il = np.tril_indices(d, -1)
    di = np.arange(d)
    # derivative of the unnormalized prediction along u E_ab: u G1[a,b] + conj(u) G2[a,b]
    J_diag = (G1[:, di, di] + G2[:, di, di]).real - f[:, None] * 2.0 * L[di, di].real
    J_re = (G1[:, il[0], il[1]] + G2[:, il[0], il[1]]).real - f[:, None] * 2.0 * L[il].real
    J_im = (1j * G1[:, il[0], il[1]] - 1j * G2[:, il[0], il[1]]).real - f[:, None] * 2.0 * L[il].imag
    J = np.hstack([J_diag, J_re, J_im]) / s * sw[:, None]
    return r, J, rho


def _levenberg_marquardt(rho0: np.ndarray, A, b, sw, max_iter: int, window: int = 5, ftol: float = 1e-3):
    """Damped Gauss-Newton over the Cholesky factor.

    Stops when the accepted steps of the last ``window`` iterations lowered
    the cost by less than a fraction ``ftol`` in total, when no damping
    yields descent, or when the gradient vanishes.
    """
    d = rho0.shape[0]
    L0 = linalg.cholesky(rho0 + 1e-12 * np.eye(d), lower=True)
    p = _cholesky_params(L0)
    r, J, rho = _cholesky_residual_jacobian(p, A, b, sw, d)
    cost = float(r @ r)
    lam = 1e-3 * float(np.max(np.sum(J * J, axis=0)) or 1.0)
    history = [cost]
    for it in range(max_iter):
        g = J.T @ r
        if cost <= 1e-30 or np.max(np.abs(g)) <= 1e-15:
            return rho, cost, it, True
        JTJ = J.T @ J
        while True:
            step = linalg.solve(JTJ + lam * np.eye(JTJ.shape[0]), -g, assume_a="pos")
            r_new, J_new, rho_new = _cholesky_residual_jacobian(p + step, A, b, sw, d)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                lam = max(lam / 3.0, 1e-15)
                break
            lam *= 4.0
            if lam > 1e16:
                # no descent direction left at working precision
                return rho, cost, it, True
        p = p + step
        r, J, rho, cost = r_new, J_new, rho_new, cost_new
        history.append(cost)
        if len(history) > window and history[-1 - window] - cost <= ftol * history[-1 - window]:
            return rho, cost, it + 1, True
    return rho, cost, max_iter, False


def solve_reconstruction(problem: ReconstructionProblem, maps) -> ReconstructionResult:
    """Fit rho to the admitted diagonals.

    The linear solve always runs; in ``cholesky`` mode its projected result
    seeds the damped Gauss-Newton refinement. Parameters whose design
    columns vanish are reported as unconstrained and set to zero.

    Raises
    ------
    UnderdeterminedError
        Fewer admitted equations than identifiable parameters, unless the
        problem allows it.
    ConvergenceError
        Gauss-Newton hit ``gn_max_iter``; carries the best iterate.
    """
    A, b, sw, owner = _assemble(problem, maps)
    raw, report = _linear_solve(problem, A, b, sw)
    basis = problem.basis
    rho = project_physical(raw, basis)
    report["solver"] = problem.mode
    if problem.mode == "cholesky":
        out, cost, iters, ok = _levenberg_marquardt(rho.entries, A, b, sw, problem.gn_max_iter)
        best = DensityMatrix.from_matrix(out, basis)
        if not ok:
            raise ConvergenceError(f"Gauss-Newton did not converge in {problem.gn_max_iter} iterations "
                                   f"(cost {cost:.3e})", best, cost)
        rho = best
        report["gn_iterations"] = iters
    misfit = (_predict(A, rho.entries) - b) ** 2 * sw**2
    per_config = np.bincount(owner, weights=misfit, minlength=len(problem.configs))
    return ReconstructionResult(rho, raw, float(misfit.sum()), per_config, report)


def true_density(model: TargetModel, N0: int) -> DensityMatrix:
    """Ground-state density matrix on |n| <= N0, from the internal truncation."""
    return DensityMatrix.pure(ground_state(model, ChargeBasis(N0)))
