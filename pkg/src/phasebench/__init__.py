"""Simulation and analysis toolkit for null-technique phase detector characterisation."""
from .bench import AdcConfig, Bench, BenchClock, DriftModel, VacConfig
from .dut import DutEntry, DutModel, Mode, QuadratureSpec, quadrature_check, quadrature_verdict
from .errors import PhaseBenchError
from .netcal import CorrectionSet, SParam, SParamSet, compute_corrections, load_sparams
from .phasor import Phasor, null_ratio_db, phase_error_bound
from .procedure import ProcedureConfig, ProcedureReport, run_point
from .referencing import reference_curves

__version__ = "0.1.0"

__all__ = [
    "AdcConfig", "Bench", "BenchClock", "CorrectionSet", "DriftModel", "DutEntry", "DutModel",
    "Mode", "PhaseBenchError", "Phasor", "ProcedureConfig", "ProcedureReport", "QuadratureSpec",
    "SParam", "SParamSet", "VacConfig", "compute_corrections", "load_sparams", "null_ratio_db",
    "phase_error_bound", "quadrature_check", "quadrature_verdict", "reference_curves", "run_point",
]
