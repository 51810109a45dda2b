"""Inertial Cahn-Hilliard phase field coupled to Maxwell-Cattaneo heat conduction
with a dynamic boundary condition, on a periodic slab."""
from .grid import GridSpec
from .model import ModelParams
from .integrator import Stepper, StepperConfig, SystemState, make_state, run
from .diagnostics import Diagnostics, DiagnosticsConfig
from .steady import Equilibrium, fit_decay, solve_stationary

__all__ = [
    "Diagnostics", "DiagnosticsConfig", "Equilibrium", "GridSpec", "ModelParams",
    "Stepper", "StepperConfig", "SystemState", "fit_decay", "make_state", "run",
    "solve_stationary",
]
__version__ = "0.1.0"
