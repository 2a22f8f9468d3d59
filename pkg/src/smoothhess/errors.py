"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SmoothHessError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SmoothHessError, ValueError):
    """An input does not have the shape the operation expects."""


class UnsupportedActivationError(SmoothHessError, ValueError):
    pass


class DegenerateCovarianceError(SmoothHessError, ValueError):
    """Covariance is not (numerically) positive definite, or directions are dependent."""


class NonFiniteError(SmoothHessError, FloatingPointError):
    pass


class NoDescentDirectionError(SmoothHessError, ValueError):
    pass


class TrainingDivergedError(SmoothHessError, FloatingPointError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"training diverged at iteration {iteration} (loss={loss})")
        self.iteration = iteration
        self.loss = loss
