"""Exception types shared across the package."""


class RiskmaxentError(Exception):
    """Base class for package errors."""


class InsufficientSamples(RiskmaxentError):
    """Too few samples for the requested neighbor count (need T >= k+1)."""


class DegenerateGeometry(RiskmaxentError):
    """A k-th neighbor distance is exactly zero, so log-volume diverges."""


class DegenerateWeights(RiskmaxentError):
    """A neighborhood carries non-positive total importance weight."""


class NonFiniteWeight(RiskmaxentError):
    """An importance log-ratio is NaN or infinite."""


class EmptyBatch(RiskmaxentError):
    """An estimator received an empty batch."""


class DimensionMismatch(RiskmaxentError):
    """Score vectors in one gradient batch have inconsistent shapes."""


class DivergentBound(RiskmaxentError):
    """A concentration bound denominator is zero."""


class InvalidLipschitz(RiskmaxentError):
    """Lipschitz constant outside (0, 1)."""


class DegenerateSupport(RiskmaxentError):
    """A marginal support lower bound of zero makes the gap bound diverge."""


class InvalidState(RiskmaxentError):
    """An environment step started from a state inside a wall."""


class LineSearchFailed(RiskmaxentError):
    """No backtracking step satisfied the trust-region constraints."""


class ConfigError(RiskmaxentError):
    """A configuration file could not be parsed or fails validation."""


class MissingFileError(RiskmaxentError):
    """A referenced input file does not exist."""
