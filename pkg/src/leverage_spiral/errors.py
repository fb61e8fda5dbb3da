"""Exception types shared across the engines."""


class ValidationError(ValueError):
    """A parameter block violates a precondition."""


class NumericalFailure(ArithmeticError):
    """A simulation produced a non-finite or otherwise unusable number."""


class SolverError(NumericalFailure):
    """The implicit price solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
