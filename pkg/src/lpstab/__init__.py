"""Dyadic decompositions, modified paraproducts and weighted-energy checks for
backward parabolic equations on the periodic grid."""
from .calibration import FrozenConstant, calibrate, validate
from .coefficients import CoefficientField, EllipticityError, builtin_family
from .config import ConfigError, ExperimentConfig, load_config
from .grid import Field, PeriodicGrid, random_field
from .harness import (
    EnergyReport, ScanConfig, StabilityScanResult, energy_inequality_check,
    negative_control_scan, proof_diagnostics, stability_scan,
)
from .littlewood_paley import decompose, delta_op, dyadic_sobolev_norm, s_op
from .paraproduct import find_m0, modified_paraproduct, remainder
from .solver import SolverConfig, SolverError, Trajectory, manufacture_backward, solve_forward
from .weights import WeightParams, choose_beta, phi, psi

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "ConfigError", "EllipticityError", "EnergyReport", "ExperimentConfig",
    "Field", "FrozenConstant", "PeriodicGrid", "ScanConfig", "SolverConfig", "SolverError",
    "StabilityScanResult", "Trajectory", "WeightParams", "builtin_family", "calibrate",
    "choose_beta", "decompose", "delta_op", "dyadic_sobolev_norm", "energy_inequality_check",
    "find_m0", "load_config", "manufacture_backward", "modified_paraproduct",
    "negative_control_scan", "phi", "proof_diagnostics", "psi", "random_field", "remainder",
    "s_op", "solve_forward", "stability_scan", "validate",
]
