"""Adiabatic measurement maps, density-matrix reconstruction and model checks."""

from .density import DensityMatrix, diagonal_distance, hilbert_schmidt_distance, project_physical
from .maps import (
    AdiabaticTransform,
    ConfigurationPlan,
    LevelCrossingError,
    MeasurementMap,
    adiabatic_transform,
    measurement_map_analytic,
    measurement_map_numeric,
    plan_configurations,
)
from .reconstruction import (
    ConvergenceError,
    MeasuredConfig,
    ReconstructionProblem,
    ReconstructionResult,
    UnderdeterminedError,
    build_maps,
    simulate_measurements,
    solve_reconstruction,
    true_density,
)
from .validation import ValidationRow, validate_model
