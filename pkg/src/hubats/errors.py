"""Exception hierarchy shared by every module."""


class HubError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(HubError, ValueError):
    """A numeric parameter is outside its legal domain."""


class InvalidIndexError(HubError, IndexError):
    """An arm, teacher or item index does not exist."""


class InsufficientDataError(HubError):
    """Not enough observations to form the requested estimate."""


class EmptyStateSpaceError(HubError):
    """State enumeration produced no states after filtering."""


class ImpossibleObservationError(HubError):
    """An observation has zero probability under every state in the belief."""


class InvalidAnchorError(HubError, ValueError):
    """Preference data for rationality estimation is not on a single usable pair."""


class GeneratorExhaustedError(HubError):
    """Task generation ran out of rejection-sampling budget."""
