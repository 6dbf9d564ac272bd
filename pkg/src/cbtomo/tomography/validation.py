"""Model-adequacy check: reconstruct with a candidate model and compare to its own prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..charge_model import TargetModel
from .density import diagonal_distance, hilbert_schmidt_distance
from .reconstruction import build_maps, simulate_measurements, solve_reconstruction, true_density


@dataclass(frozen=True)
class ValidationRow:
    """One configuration count of a model comparison.

    ``determined`` is False when the admitted equations were fewer than the
    identifiable parameters and the solve fell back to minimum norm.
    """

    ej2_ratio: float
    count: int
    hs: float
    diag: float
    determined: bool


def validate_model(true_model: TargetModel, fit_model: TargetModel, counts, *, EJ_range=(10.0, 50.0),
                   N0: int = 7, map_fn=map, **options) -> list[ValidationRow]:
    """Hilbert-Schmidt and diagonal distance between a fit and its model's ground state.

    For every count the configurations densify the fixed ``EJ_range``.
    Data come from ``true_model``; maps and the reference state rho_sim come
    from ``fit_model``. A small distance means the data are consistent with
    the fit model.

    Parameters
    ----------
    true_model, fit_model : TargetModel
        Both at the preparation EJ; they must share EC.
    counts : iterable of int
    map_fn : callable
        Order-preserving map over counts, e.g. a thread pool's ``map``.
    **options
        Forwarded to :class:`ReconstructionProblem`; ``allow_underdetermined``
        defaults to True here so small counts still produce a row.
    """
    if true_model.EC != fit_model.EC:
        raise ValueError("true and fit models must share EC")
    options.setdefault("allow_underdetermined", True)
    rho_sim = true_density(fit_model, N0)
    ratio = fit_model.EJ2 / fit_model.EJ if fit_model.EJ > 0 else 0.0
    lo, hi = EJ_range

    def one(count: int) -> ValidationRow:
        EJs = np.linspace(lo, hi, int(count))
        problem = simulate_measurements(true_model, EJs, N0, fit_model=fit_model, **options)
        result = solve_reconstruction(problem, build_maps(problem))
        return ValidationRow(ratio, int(count), hilbert_schmidt_distance(result.rho, rho_sim),
                             diagonal_distance(result.rho, rho_sim), result.diagnostics["determined"])

    return list(map_fn(one, counts))
