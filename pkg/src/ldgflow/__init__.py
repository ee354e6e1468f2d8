"""Pseudo-spectral solver for non-isothermal Q-tensor nematic flow with a
singular maximum-entropy bulk potential, plus structural diagnostics."""

from .errors import (CFLViolation, ConfigError, DomainViolation, LdgError, NoConvergence,
                     NonpositiveTemperature, NumericalBlowup, SchemeFailure,
                     TemperatureCollapse)
from .fields import Grid
from .potential import PotentialEval, ThermoFunctions, eval_f, eval_f_moreau, eval_thermo
from .dynamics import SchemeParams, State, run, step

__version__ = "0.1.0"
