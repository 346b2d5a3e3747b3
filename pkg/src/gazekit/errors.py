"""Exception types shared across the toolkit."""


class GazeKitError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(GazeKitError, ValueError):
    """An argument violates a documented precondition."""


class OutOfDomain(GazeKitError, ValueError):
    """A numeric argument lies outside the mathematical domain of the operation."""


class EstimationFailed(GazeKitError, RuntimeError):
    """Pose estimation could not produce a usable solution."""


class BlendFailed(GazeKitError, RuntimeError):
    """The Poisson solver did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NoMatch(GazeKitError, LookupError):
    """Retrieval had no candidates to choose from."""


class DescentDiverged(GazeKitError, RuntimeError):
    """Gradient descent produced a non-finite loss."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
