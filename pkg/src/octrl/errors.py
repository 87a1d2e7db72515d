"""Exception types shared across the toolkit.

Every error raised by octrl derives from :class:`OctrlError`, so callers
(notably the CLI) can map any toolkit failure to a single exit code.
"""

from __future__ import annotations


class OctrlError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(OctrlError):
    """A container or call was set up inconsistently (dimensions, missing
    controller, invalid parameters)."""


class NumericalFault(OctrlError):
    """A computation produced a non-finite value.

    Attributes carry context when available: ``index`` is the offending
    vector component, ``time`` the integration time of failure.
    """

    def __init__(self, message, index=None, time=None):
        super().__init__(message)
        self.index = index
        self.time = time


class StiffnessFault(OctrlError):
    """Adaptive step size underflowed or the step budget was exhausted."""


class SingularityFault(OctrlError):
    """A required linear solve hit a singular matrix. ``stage`` identifies
    the horizon stage for stage-wise solvers."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class ConvergenceFault(OctrlError):
    """An iterative solver did not converge; ``residual`` is the last value
    of its convergence metric."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RegularizationFault(OctrlError):
    """Hessian regularization exceeded its cap without restoring positive
    definiteness."""


class LineSearchFault(OctrlError):
    """No step size improved the merit function despite a large predicted
    decrease."""


class ParseError(OctrlError):
    """Config text could not be parsed. ``line``/``section`` locate the
    problem when known."""

    def __init__(self, message, line=None, section=None):
        super().__init__(message)
        self.line = line
        self.section = section


class ValidationError(OctrlError):
    """Config parsed but is semantically invalid; ``section`` and ``key``
    name the offending entry."""

    def __init__(self, message, section=None, key=None):
        super().__init__(message)
        self.section = section
        self.key = key
