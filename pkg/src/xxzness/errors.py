class NumericalError(RuntimeError):
    """A numerical procedure could not deliver a result at the requested accuracy."""


class PropagationError(NumericalError):
    pass


class DegenerateNessError(NumericalError):
    """The master operator has more than one eigenvalue of modulus one."""
