"""Exception and warning types shared across the package."""


class StomorError(Exception):
    """Base class for every failure raised by this package."""


class SingularSystem(StomorError):
    """A linear solve hit an operator that is singular to tolerance.

    Attributes
    ----------
    condition : float or None
        Estimated condition number of the offending operator.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DecompositionError(StomorError):
    """A matrix factorization did not converge or lost rank."""


class CertificateFailed(StomorError):
    """A stability certificate required by a model construction failed.

    Attributes
    ----------
    eigenvalue : complex or None
        Offending eigenvalue (the one with the largest real part).
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NoSolution(StomorError):
    """A construction has no (real, invertible, ...) solution."""


class NotPlaceable(StomorError):
    """Pole placement failed because the pair is not observable.

    Attributes
    ----------
    unobservable_dim : int or None
        Dimension of the unobservable subspace.
    """

    def __init__(self, message, unobservable_dim=None):
        super().__init__(message)
        self.unobservable_dim = unobservable_dim


class DivergenceError(StomorError):
    """A simulated path blew up (state norm beyond the divergence guard).

    Attributes
    ----------
    step_index : int or None
        First step at which the guard fired (single-path simulations).
    diverged : list of (path_index, step_index) or None
        All diverged paths of an ensemble run.
    """

    def __init__(self, message, step_index=None, diverged=None):
        super().__init__(message)
        self.step_index = step_index
        self.diverged = diverged


class MatrixFormatError(StomorError):
    """A matrix/model/config file could not be parsed.

    Attributes
    ----------
    line_number : int or None
        1-based line at which parsing failed.
    """

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class ModelReductionWarning(UserWarning):
    """Non-fatal diagnostic emitted during moment solves or model builds."""
