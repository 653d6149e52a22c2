"""Numerical lab for controllability of the g-SRLW system."""
from .errors import (ConfigError, DegenerateFamily, IllConditioned, MeanMismatch, NonConvergence,
                     NonlinearityOverflow, NumericalError, SRLWError, ZeroMeanBump)
from .spectral_core import TorusState, semigroup_apply, xs_norm

__version__ = "0.1.0"
