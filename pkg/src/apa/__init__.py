"""Anderson-Pulay fixed-point acceleration with adaptive depth policies."""

from apa.coefficients import (
    Coefficients,
    DegenerateHistoryError,
    from_alpha,
    from_gamma,
    from_theta,
    solve_alpha,
    solve_gamma,
    solve_lagrangian,
)
from apa.driver import (
    Adaptive,
    DivergenceError,
    Fixed,
    Problem,
    Restarted,
    SuperAdaptive,
    SuperRestarted,
    accelerate,
)
from apa.history import DiffMode, IterateHistory
from apa.trace import Trace, convergence_rate, mean_depth

__all__ = [
    "Adaptive",
    "Coefficients",
    "DegenerateHistoryError",
    "DiffMode",
    "DivergenceError",
    "Fixed",
    "IterateHistory",
    "Problem",
    "Restarted",
    "SuperAdaptive",
    "SuperRestarted",
    "Trace",
    "accelerate",
    "convergence_rate",
    "from_alpha",
    "from_gamma",
    "from_theta",
    "mean_depth",
    "solve_alpha",
    "solve_gamma",
    "solve_lagrangian",
]
