"""Experiment pipelines: one function per config kind, each writing CSVs into a run directory."""

from __future__ import annotations

import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .charge_model import (
    ChargeBasis,
    TargetModel,
    analytic_wavefunction,
    charge_probabilities,
    ground_state,
    solve_model,
)
from .circuit import sweep
from .config import CircuitSection, ExperimentConfig
from .io import matrix_rows, write_csv, write_json, write_manifest
from .ramsey import ProbeSpec, default_time_grid, extract_probabilities, simulate_protocol
from .tomography import (
    build_maps,
    diagonal_distance,
    hilbert_schmidt_distance,
    simulate_measurements,
    solve_reconstruction,
    true_density,
)
from .tomography.validation import validate_model

CIRCUIT_COLUMNS = ("delta_p_GHz", "g_par_pc_MHz", "g_perp_pc_MHz", "g_par_pt_MHz",
                   "g_perp_pt_MHz", "g_perp_ct_MHz", "g_tp_MHz")


@dataclass
class RunManifest:
    out_dir: Path
    outputs: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0


@contextmanager
def _mapper(threads: int):
    """Order-preserving map, threaded when ``threads`` > 1."""
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield pool.map


def _model(cfg: ExperimentConfig, EJ_over_EC: float | None = None) -> TargetModel:
    m = cfg.model
    EJ = m.EJ_over_EC if EJ_over_EC is None else EJ_over_EC
    return TargetModel(1.0, EJ, m.EJ2_over_EJ * EJ, m.ng)


def _basis(cfg: ExperimentConfig, model: TargetModel) -> ChargeBasis:
    return ChargeBasis(cfg.model.N) if cfg.model.N else ChargeBasis.default_for(model)


def _fmt(x: float) -> str:
    return f"{x:g}"


def run_spectrum(cfg: ExperimentConfig, out: Path, map_fn) -> tuple[list[Path], dict]:
    rows_p, rows_e = [], []
    for r in cfg.spectrum.EJ_over_EC:
        model = _model(cfg, r)
        basis = _basis(cfg, model)
        p = charge_probabilities(ground_state(model, basis))
        pa = (charge_probabilities(analytic_wavefunction(0, model, basis)) if model.EJ > 0
              else np.full(basis.dim, np.nan))
        rows_p += [(r, int(n), a, b) for n, a, b in zip(basis.charges, p, pa)]
        es = solve_model(model, basis.internal(), k=cfg.spectrum.levels)
        rows_e += [(r, q, float(E), float(E) * cfg.model.EC_GHz) for q, E in enumerate(es.energies)]
    files = [
        write_csv(out / "probabilities.csv", ("EJ_over_EC", "n", "p_numeric", "p_analytic"), rows_p),
        write_csv(out / "levels.csv", ("EJ_over_EC", "level", "energy_EC", "energy_GHz"), rows_e),
    ]
    return files, {}


def _probe(cfg: ExperimentConfig) -> ProbeSpec:
    return ProbeSpec(cfg.probe.delta_p_GHz / cfg.model.EC_GHz, cfg.probe.g_GHz / cfg.model.EC_GHz)


def _ns_per_unit(cfg: ExperimentConfig) -> float:
    # t [1/EC, hbar = 1] -> ns with EC/h in GHz
    return 1.0 / (2 * math.pi * cfg.model.EC_GHz)


def _warn_coherence(cfg: ExperimentConfig, duration_ns: float) -> None:
    for name in ("T1_ns", "Tphi_ns"):
        limit = getattr(cfg.ramsey, name)
        if limit is not None and duration_ns >= limit:
            print(f"warning: readout window {duration_ns:.4g} ns is not shorter than {name} = {limit:g} ns; "
                  "the decoherence-free signal model does not apply", file=sys.stderr)


def _ramsey_records(cfg: ExperimentConfig, map_fn):
    model = _model(cfg)
    basis = _basis(cfg, model)
    prepared = ground_state(model, basis)
    probe = _probe(cfg)
    grid = default_time_grid(probe, cfg.ramsey.samples, cfg.ramsey.periods)
    _warn_coherence(cfg, (grid[-1] + grid[1]) * _ns_per_unit(cfg))

    def one(item):
        i, r = item
        readout = TargetModel(1.0, r, 0.0, cfg.model.ng)
        rec = simulate_protocol(prepared, readout, probe, grid, noise_std=cfg.ramsey.noise_std,
                                seed=cfg.seed + i)
        return r, rec, extract_probabilities(rec, basis)

    return prepared, list(map_fn(one, enumerate(cfg.ramsey.residual_EJ_over_EC)))


def run_ramsey(cfg: ExperimentConfig, out: Path, map_fn) -> tuple[list[Path], dict]:
    tu = _ns_per_unit(cfg)
    prepared, results = _ramsey_records(cfg, map_fn)
    files = []
    multi = len(results) > 1
    for r, rec, peaks in results:
        suffix = f"_EJ{_fmt(r)}" if multi else ""
        files.append(write_csv(out / f"ramsey{suffix}.csv", ("t", "sigma_x"),
                               zip(rec.times * tu, rec.sigma_x)))
        files.append(write_csv(out / f"peaks{suffix}.csv", ("n", "omega", "amplitude"),
                               zip(peaks.charges, peaks.omega / tu, peaks.amplitude)))
    p = charge_probabilities(prepared)
    err = max(float(np.max(np.abs(pk.amplitude - p))) for r, _, pk in results if r == 0) if any(
        r == 0 for r, _, _ in results) else float("nan")
    return files, {"max_abs_amplitude_error_at_EJ0": err}


def run_ej_scan(cfg: ExperimentConfig, out: Path, map_fn) -> tuple[list[Path], dict]:
    tu = _ns_per_unit(cfg)
    _, results = _ramsey_records(cfg, map_fn)
    scan, peaks_rows, spec_rows = [], [], []
    for r, rec, pk in results:
        scan += [(r, int(n), a) for n, a in zip(pk.charges, pk.amplitude)]
        peaks_rows += [(r, int(n), w / tu, mw / tu, a)
                       for n, w, mw, a in zip(pk.charges, pk.omega, pk.measured_omega, pk.amplitude)]
        sel = pk.periodogram_omega <= 2 * float(np.max(np.abs(pk.omega)))
        spec_rows += [(r, w / tu, F) for w, F in zip(pk.periodogram_omega[sel], pk.periodogram[sel])]
    files = [
        write_csv(out / "scan.csv", ("EJ_over_EC", "n", "amplitude"), scan),
        write_csv(out / "scan_peaks.csv", ("EJ_over_EC", "n", "omega", "measured_omega", "amplitude"), peaks_rows),
        write_csv(out / "periodogram.csv", ("EJ_over_EC", "omega", "amplitude"), spec_rows),
    ]
    a0 = {_fmt(r): float(pk[0][1]) for r, _, pk in results}
    return files, {"A0": a0}


def _problem_options(cfg: ExperimentConfig) -> dict:
    t = cfg.tolerance
    return dict(mode=cfg.tomography.solver, floor=t.visibility_floor, rcond=t.lstsq_rcond, gn_max_iter=t.gn_max_iter)


def run_reconstruct(cfg: ExperimentConfig, out: Path, map_fn) -> tuple[list[Path], dict]:
    tc = cfg.tomography
    model = _model(cfg)
    if len(tc.counts) != 1:
        raise ValueError("tomography.counts: reconstruct takes exactly one configuration count")
    EJs = np.linspace(*tc.EJ_range, tc.counts[0])
    problem = simulate_measurements(model, EJs, tc.N0, noise_std=tc.noise_std, seed=cfg.seed,
                                    **_problem_options(cfg))
    result = solve_reconstruction(problem, build_maps(problem, tc.maps, map_fn=map_fn))
    rho_true = true_density(model, tc.N0)
    diff = np.abs(result.rho.entries - rho_true.entries)
    N = tc.N0
    files = [
        write_csv(out / "rho_true.csv", ("j", "k", "re", "im"), matrix_rows(rho_true.entries, N)),
        write_csv(out / "rho_rec.csv", ("j", "k", "re", "im"), matrix_rows(result.rho.entries, N)),
        write_csv(out / "absdiff.csv", ("j", "k", "absdiff"),
                  ((j, k, re) for j, k, re, _ in matrix_rows(diff, N))),
        write_json(out / "problem.json", problem.to_dict()),
        write_json(out / "result.json", result.to_dict()),
    ]
    summary = {"max_abs_diff": float(diff.max()), "hs_distance": hilbert_schmidt_distance(result.rho, rho_true)}
    return files, summary


def run_validate(cfg: ExperimentConfig, out: Path, map_fn) -> tuple[list[Path], dict]:
    tc = cfg.tomography
    true_model = _model(cfg)
    rows = []
    for ratio in tc.fit_EJ2_over_EJ:
        fit = TargetModel(1.0, true_model.EJ, ratio * true_model.EJ, true_model.ng)
        rows += validate_model(true_model, fit, tc.counts, EJ_range=tc.EJ_range, N0=tc.N0, map_fn=map_fn,
                               noise_std=tc.noise_std, seed=cfg.seed, **_problem_options(cfg))
    files = [write_csv(out / "fig5.csv", ("ej2_ratio", "count", "hs", "diag", "determined"),
                       ((r.ej2_ratio, r.count, r.hs, r.diag, r.determined) for r in rows))]
    return files, {"count_grid": "fixed EJ range, densified", "EJ_range": list(tc.EJ_range)}


def run_circuit_sweep(cfg: ExperimentConfig, out: Path, map_fn) -> tuple[list[Path], dict]:
    base = cfg.circuit
    eig = dict(dense_threshold=cfg.tolerance.dense_threshold, max_dimension=cfg.tolerance.max_dimension)
    files = []
    if not cfg.sweeps:
        raise ValueError("sweeps: circuit-sweep needs at least one [[sweeps]] table")
    for sw in cfg.sweeps:
        section = CircuitSection(**{**base.model_dump(), **sw.fixed})
        template = section.spec()
        series = [(None, template)] if sw.series_parameter is None else [
            (v, template.with_param(sw.series_parameter, v)) for v in sw.series_values]
        for v, spec in series:
            rows = sweep(spec, sw.parameter, sw.grid(), section.Np, map_fn=map_fn, **eig)
            name = sw.name if v is None else f"{sw.name}_{sw.series_parameter}={_fmt(v)}"
            table = [(r.parameter, *(r.row()[c] for c in CIRCUIT_COLUMNS)) for r in rows]
            files.append(write_csv(out / f"{name}.csv", (sw.parameter, *CIRCUIT_COLUMNS), table))
    return files, {}


PIPELINES = {
    "spectrum": run_spectrum,
    "ramsey": run_ramsey,
    "ej-scan": run_ej_scan,
    "reconstruct": run_reconstruct,
    "validate": run_validate,
    "circuit-sweep": run_circuit_sweep,
}


def run(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> RunManifest:
    """Run one experiment and write its outputs, config echo and manifest."""
    out = Path(out_dir or cfg.output_dir or Path("out") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with _mapper(threads) as map_fn:
        files, summary = PIPELINES[cfg.kind](cfg, out, map_fn)
    echo = out / "config.toml"
    echo.write_text(cfg.to_toml())
    files.append(echo)
    wall = time.perf_counter() - t0
    write_manifest(out, cfg.model_dump(mode="json", exclude_none=True), __version__, wall, files, cfg.seed,
                   {"summary": summary})
    return RunManifest(out, files, summary, wall)
