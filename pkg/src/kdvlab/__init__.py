"""Numerical laboratory for white-noise invariance of KdV on the circle."""

from .field import (
    GridField,
    SpectrumField,
    TorusGrid,
    antiderivative_from_zero,
    dealias_23,
    quadrature_mean,
    spectral_derivative,
    to_grid,
    to_spectrum,
)
from .flows import FlowSpec, evolve
from .samplers import RngStream, WeightedEnsemble
from .stats import TestReport

__version__ = "0.1.0"
