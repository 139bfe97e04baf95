"""Generalized scalar auxiliary variable (G-SAV) schemes for periodic gradient flows."""

from .gfunc import ExpScaled, Power, SqrtShift, TanhScaled, parse_g
from .grid import Grid, SpectralContext
from .models import make_model
from .newton import NewtonConfig, solve_scalar, solve_system
from .schemes import SchemeKind, SchemeState, init_state, parse_scheme, step

__all__ = [
    "ExpScaled", "Grid", "NewtonConfig", "Power", "SchemeKind", "SchemeState",
    "SpectralContext", "SqrtShift", "TanhScaled", "init_state", "make_model",
    "parse_g", "parse_scheme", "solve_scalar", "solve_system", "step",
]
__version__ = "0.1.0"
