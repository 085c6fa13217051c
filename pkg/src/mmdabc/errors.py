"""Exception hierarchy for mmdabc.

Two families matter for the command line front end: validation errors
(malformed inputs, configs, or incompatible files; exit code 2) and numerical
errors (degeneracies discovered while computing; exit code 3). Everything
derives from :class:`MmdAbcError` so callers can catch the whole package with
one clause.
"""

from __future__ import annotations


class MmdAbcError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(MmdAbcError):
    """Invalid input: bad values, shapes, files, or configuration."""

    exit_code = 2


class InvalidDataError(ValidationError):
    """Data values are unusable (non-finite entries, too few rows, ...)."""


class DimensionMismatchError(ValidationError):
    """Operands have incompatible dimensions."""


class GridMismatchError(ValidationError):
    """Two datasets live on different frequency grids."""


class ConfigError(ValidationError):
    """Run configuration is malformed or inconsistent."""


class NumericalError(MmdAbcError):
    """A computation hit a degenerate or out-of-domain regime."""

    exit_code = 3


class DegenerateSignalError(NumericalError):
    """A realization has no energy, so log moments are undefined."""


class DegenerateDataError(NumericalError):
    """Point set is degenerate (e.g. all rows identical: zero median distance)."""


class NumericalDomainError(NumericalError):
    """An argument left the mathematical domain of the operation."""


class ResourceGuardError(NumericalError):
    """A simulation would exceed the configured resource budget."""


class DivergentGraphError(NumericalError):
    """Propagation-graph bounce series does not converge."""


class StuckProposalError(NumericalError):
    """Box-truncated proposal sampling accepts essentially nothing."""


class DegenerateWeightsError(NumericalError):
    """All importance weights collapsed to zero."""


class CalibrationRunError(MmdAbcError):
    """A calibration run failed part-way; carries the completed populations.

    The ``populations`` attribute holds the per-iteration results obtained
    before the failure, and ``exit_code`` mirrors the underlying cause so the
    CLI can map it faithfully.
    """

    def __init__(self, message, populations=(), cause_exit_code=1):
        super().__init__(message)
        self.populations = list(populations)
        self.exit_code = cause_exit_code
