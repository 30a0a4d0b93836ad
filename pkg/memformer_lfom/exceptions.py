class MemformerError(Exception):
    """Base class for all errors raised by memformer_lfom."""

    def __reduce__(self):
        """Support for pickling the exception when passing between processes."""
        return self.__class__, (str(self),)


class AutodiffError(MemformerError):
    """Error raised while recording or differentiating a tape."""


class ShapeMismatchError(AutodiffError):
    """Operands of a primitive have incompatible shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = ", ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")

    def __reduce__(self):
        return self.__class__, (self.op, *self.shapes)


class NotScalarError(AutodiffError):
    """backward() was called on a node that is not a 1x1 matrix."""


class NonFiniteValueError(MemformerError):
    """External input contains NaN or Inf."""


class NotPositiveDefiniteError(MemformerError):
    """A covariance matrix failed the positive definiteness check."""


class TrainingError(MemformerError):
    """Base class for errors that abort a training run."""


class NonFiniteGradientError(TrainingError):
    """A parameter gradient contains NaN or Inf."""

    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter

    def __reduce__(self):
        return self.__class__, (self.args[0], self.parameter)

    def __str__(self):
        if self.parameter:
            return f"{super().__str__()} (parameter: {self.parameter})"
        return super().__str__()


class DivergenceError(TrainingError):
    """The training loss exceeded the divergence threshold."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

    def __reduce__(self):
        return self.__class__, (self.args[0], self.step)

    def __str__(self):
        if self.step is not None:
            return f"{super().__str__()} (step: {self.step})"
        return super().__str__()


class ExperimentError(MemformerError):
    """An experiment preset is missing or its artifacts could not be written."""
