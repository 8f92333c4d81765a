"""Sphere-plane electrostatic calibration analysis.

Capacitance models for ideal and modified sphere-plane geometries, a damped
Gauss-Newton least-squares engine, calibration-fit workflows, contact-potential
statistics and a seeded synthetic-data generator.
"""

from .errors import DomainError, InputError, NonFiniteModelError
from .models import (
    EPSILON0,
    AffineNuisance,
    EffectiveMass,
    IdealGeometry,
    ModifiedGeometry,
    capacitance_second_derivative,
    curvature_coefficient,
    ideal_capacitance,
    local_scaling_exponent,
    modified_capacitance,
    theoretical_A3,
)
from .fitting import (
    DataSeries,
    FitOptions,
    FitResult,
    ModelComparison,
    compare_models,
    constant_fit,
    unweighted_fit,
    weighted_nls_fit,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "InputError",
    "NonFiniteModelError",
    "EPSILON0",
    "AffineNuisance",
    "EffectiveMass",
    "IdealGeometry",
    "ModifiedGeometry",
    "capacitance_second_derivative",
    "curvature_coefficient",
    "ideal_capacitance",
    "local_scaling_exponent",
    "modified_capacitance",
    "theoretical_A3",
    "DataSeries",
    "FitOptions",
    "FitResult",
    "ModelComparison",
    "compare_models",
    "constant_fit",
    "unweighted_fit",
    "weighted_nls_fit",
]
