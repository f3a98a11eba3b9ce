"""Exception hierarchy shared by all modules."""


class SeqRpfError(Exception):
    """Base class for all library errors."""


class SpecError(SeqRpfError, ValueError):
    """A system or environment specification violates its invariants."""


class ConfigError(SeqRpfError, ValueError):
    """An experiment configuration failed schema validation."""


class NonPrimitive(SeqRpfError):
    """Transition products are not strictly positive within the horizon."""


class BranchLoss(SeqRpfError):
    """The leading eigenvalue came too close to zero along the continuation path."""


class NotConverged(SeqRpfError):
    """Eigen or duality residuals stayed above tolerance."""


class StateCapExceeded(SeqRpfError):
    """The lattice dynamic program would need more states than allowed."""


class VarianceTooSmall(SeqRpfError):
    """The variance of the Birkhoff sums does not grow linearly."""


class HorizonInsufficient(SeqRpfError):
    """A truncated series has a tail above tolerance."""


class InvalidDriver(SeqRpfError, ValueError):
    """Environment driver probabilities are not stochastic."""


class PreconditionFailed(SeqRpfError):
    """An experiment's structural precondition does not hold."""
