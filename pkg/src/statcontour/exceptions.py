"""Exception hierarchy shared by the whole package."""


class StatContourError(Exception):
    """Base class for all errors raised by statcontour."""


class DomainError(StatContourError, ValueError):
    """An observation lies outside the support of the model."""


class ParameterError(StatContourError, ValueError):
    """A natural parameter lies outside the natural parameter space."""


class DegenerateRegionError(StatContourError, ValueError):
    """Region moments cannot be mapped back to a natural parameter."""


class InitializationError(StatContourError, ValueError):
    """A level-set function cannot be built from the given mask."""


class EvaluationError(StatContourError, ValueError):
    """Ground truth does not allow FPF/TPF to be defined."""
