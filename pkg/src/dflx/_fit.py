"""Least-squares slope fits on logarithmic axes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidInputError


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int


def fit_line(x, y) -> SlopeFit:
    """Ordinary least squares ``y = slope * x + intercept``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise InvalidInputError("need at least two points to fit a slope")
    if x.size == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return SlopeFit(float(slope), float(y[0] - slope * x[0]), 0.0, 2)
    res = stats.linregress(x, y)
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return SlopeFit(float(res.slope), float(res.intercept), stderr, int(x.size))


def loglog_slope(x, y, base: float = 2.0) -> SlopeFit:
    """Slope of ``log_base(y)`` against ``log_base(x)``; ``y`` must be positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(x <= 0):
        raise InvalidInputError("log-log fit needs positive data")
    lb = np.log(base)
    return fit_line(np.log(x) / lb, np.log(y) / lb)
