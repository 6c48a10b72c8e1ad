"""Extremes of perpetuities ``R_n = M_n R_{n-1} + q`` with ``0 <= M <= 1``."""

from .kernels import BACKEND
from .mdist import (AtomMixture, Beta, ExpIntFamily, MDistSpec, RFamily, TwoPoint,
                    format_spec, p_delta_asymptotic, parse_spec, validate)
from .recurrence import (BurnIn, Fixed, RecurrenceConfig, Stationary, block_maxima,
                         ensemble, sample_stationary, simulate_path)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AtomMixture", "Beta", "ExpIntFamily", "MDistSpec", "RFamily", "TwoPoint",
    "format_spec", "p_delta_asymptotic", "parse_spec", "validate", "BurnIn", "Fixed",
    "RecurrenceConfig", "Stationary", "block_maxima", "ensemble", "sample_stationary",
    "simulate_path",
]
