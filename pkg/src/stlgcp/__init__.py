"""Separable spatio-temporal log-Gaussian Cox processes: estimation,
conditional simulation and forecasting."""

from .core import (CellCountSeries, EmptyPatternError, GridConsistencyError, GridSpec,
                   ObservationWindow, ParseError, PatternError, Raster, SpatioTemporalPointPattern,
                   aggregate_counts, daily_counts, load_point_pattern, load_window, save_point_pattern)
from .covfit import CovarianceParams

__all__ = [
    "CellCountSeries", "CovarianceParams", "EmptyPatternError", "GridConsistencyError", "GridSpec",
    "ObservationWindow", "ParseError", "PatternError", "Raster", "SpatioTemporalPointPattern",
    "aggregate_counts", "daily_counts", "load_point_pattern", "load_window", "save_point_pattern",
]

__version__ = "0.1.0"
