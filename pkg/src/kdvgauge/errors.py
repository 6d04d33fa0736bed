"""Exception types shared across the package.

The CLI maps these onto exit codes, so every failure that a user can trigger
through configuration derives from :class:`ValidationError` and every failure
produced by the numerics derives from :class:`NumericalError`.
"""


class ValidationError(ValueError):
    """A precondition on inputs or configuration is violated."""


class RepresentationError(ValidationError):
    """A field is in the wrong (physical / Fourier) representation."""


class ResolutionError(ValidationError):
    """The grid cannot resolve the requested data."""


class AdmissibilityError(ValidationError):
    """An exponent triple violates the Strichartz admissibility identity."""


class NumericalError(RuntimeError):
    """A computation produced values outside its trustworthy range."""


class GaugeOverflowError(NumericalError):
    def __init__(self, name, sup):
        self.name = name
        self.sup = float(sup)
        super().__init__(f"sup|{name}| = {self.sup:.6g} exceeds the overflow guard")


class BlowUpError(NumericalError):
    """Raised by the time stepper; carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
