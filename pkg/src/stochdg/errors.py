"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations

import numpy as np


class StochDGError(Exception):
    """Base class for all package errors."""


class ConfigError(StochDGError, ValueError):
    """Invalid user configuration (bad rule name, incompatible strategy, ...)."""


class SingularFormError(StochDGError, ArithmeticError):
    """A skew-gradient matrix was evaluated on its singular set.

    Attributes
    ----------
    point : ndarray
        The first offending state.
    rows : ndarray or None
        Batch rows that hit the singular set, when the input was batched.
    """

    def __init__(self, message, point, rows=None):
        super().__init__(f"{message} at x={np.array2string(np.asarray(point), precision=17)}")
        self.point = np.asarray(point)
        self.rows = rows


class DomainError(SingularFormError):
    """State left the admissible region of a problem (e.g. positivity)."""


class NonConvergenceError(StochDGError, RuntimeError):
    """The implicit solve did not reach its tolerance.

    Attributes
    ----------
    residual : float
        Largest residual among the rows that failed.
    iterations : int
        Length of the residual history.
    rows : ndarray or None
        Failed batch rows (None for an unbatched solve).
    """

    def __init__(self, residual, iterations, rows=None):
        super().__init__(
            f"implicit solve did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.rows = rows


class StepError(StochDGError, RuntimeError):
    """Wraps a failure raised inside a stepper with its location."""

    def __init__(self, step, cause, label=None):
        where = f"step {step}" if label is None else f"step {step}, sub-step {label}"
        super().__init__(f"{where}: {cause}")
        self.step = step
        self.label = label
        self.cause = cause


class StudyFailure(StochDGError, RuntimeError):
    """Too many Monte Carlo paths failed; ``report`` holds what was computed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
