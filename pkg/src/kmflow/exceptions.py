"""Exception hierarchy shared by every kmflow module."""


class KMFlowError(Exception):
    """Base class for all errors raised by kmflow."""


class DimensionError(KMFlowError, ValueError):
    """Vectors or operators of incompatible dimension were combined."""


class SpecError(KMFlowError, ValueError):
    """An operator, schedule or problem was specified with invalid parameters."""


class UnsupportedProxError(SpecError):
    """No closed-form proximal map is available for the requested function."""


class DomainError(KMFlowError, ValueError):
    """A schedule was evaluated or integrated outside [0, inf)."""


class RangeExceeded(KMFlowError, ValueError):
    """The requested rescaled time is not reachable within the search bracket."""


class PreconditionError(KMFlowError, ValueError):
    """An analysis was requested on inputs that violate its hypotheses."""


class InsufficientData(KMFlowError, ValueError):
    """Too few usable samples for a fit."""


class NumericalError(KMFlowError, RuntimeError):
    """Integration or linear algebra broke down."""


class DivergenceError(NumericalError):
    """The state left the finite range or blew past the divergence guard."""
