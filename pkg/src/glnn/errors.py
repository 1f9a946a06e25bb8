"""Exception hierarchy shared by all modules."""


class GlnnError(Exception):
    pass


class ConfigError(GlnnError, ValueError):
    pass


class NumericError(GlnnError, ArithmeticError):
    """A computation produced NaN or inf."""


class NumericOverflowError(NumericError):
    pass


class SingularMassMatrixError(NumericError):
    """The velocity Hessian (plus ridge) could not be inverted."""


class DivergenceError(NumericError):
    """An integrator produced a non-finite state.

    ``step`` is the output step index at which it happened and ``trajectory``
    the trajectory index when known.
    """

    def __init__(self, message, step=None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class ModelFormatError(GlnnError, ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class DatasetFormatError(GlnnError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
