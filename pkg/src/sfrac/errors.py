"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of the function (e.g. log of a
    nonpositive real quaternion)."""


class ExprSyntaxError(ValueError):
    """Coefficient-expression parse failure.  Carries the byte offset of the
    first offending character in ``offset``."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalError(ArithmeticError):
    """Expression evaluation hit a pole or left the real domain (division by
    zero, sqrt of a negative, ...)."""


class SolverDiverged(RuntimeError):
    """Linear solver failed to reach the requested residual.  ``node_index``
    identifies the quadrature node when the failure happened inside the
    Balakrishnan loop (None otherwise)."""

    def __init__(self, message, node_index=None):
        if node_index is not None:
            message = f"{message} [quadrature node {node_index}]"
        super().__init__(message)
        self.node_index = node_index


class ConditionsFailed(RuntimeError):
    """The operator-hypothesis report came back negative and the caller did
    not override."""


class RejectVariableCoefficients(ValueError):
    """Closed-form reference requested for a variable-coefficient operator;
    it is only defined for constant coefficients."""


class StabilityError(RuntimeError):
    """Explicit time step violates the spectral-radius stability bound."""
