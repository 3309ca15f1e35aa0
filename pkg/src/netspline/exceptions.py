"""Exception types raised across the package."""


class NetworkError(ValueError):
    """Structural or geometric problem with a network definition."""


class SnapError(NetworkError):
    """A planar location is farther from the network than allowed."""

    def __init__(self, message, distance, index=None):
        super().__init__(message)
        self.distance = distance
        self.index = index


class ContractError(ValueError):
    """Arguments violate a documented precondition."""


class ConvergenceError(RuntimeError):
    """An iterative fit failed to converge.

    The last iterate is kept on ``gamma`` for inspection.
    """

    def __init__(self, message, gamma=None, iterations=None):
        super().__init__(message)
        self.gamma = gamma
        self.iterations = iterations


class StudyError(RuntimeError):
    """Too many replicates of a simulation study failed."""


class FormatError(ValueError):
    """A file does not follow the expected on-disk format."""
