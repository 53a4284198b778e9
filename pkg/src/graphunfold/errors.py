"""Exception hierarchy for graphunfold.

All library errors derive from :class:`GraphUnfoldError` so callers can
catch broadly; argument validation uses plain ``ValueError``.
"""


class GraphUnfoldError(Exception):
    """Base class for all graphunfold errors."""


class ParameterDomainError(GraphUnfoldError):
    """A family parameter produced a probability outside [0, 1]."""


class NumericOverflowError(GraphUnfoldError):
    """An energy-model normalizer overflowed double precision."""


class SizeBudgetError(GraphUnfoldError):
    """A requested computation exceeds the configured size budget."""


class GenerationError(GraphUnfoldError):
    """Random model generation exhausted its retry budget."""
