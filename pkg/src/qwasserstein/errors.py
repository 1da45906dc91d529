"""Exception hierarchy shared by all modules."""


class QWError(Exception):
    """Base class for every error raised by this package."""


class StateValidationError(QWError, ValueError):
    pass


class NotSquare(StateValidationError):
    pass


class NotHermitian(StateValidationError):
    def __init__(self, max_asymmetry):
        self.max_asymmetry = float(max_asymmetry)
        super().__init__(f"matrix is not Hermitian (max |A - A*| = {self.max_asymmetry:.3e})")


class NotPSD(StateValidationError):
    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(f"matrix is not PSD (min eigenvalue = {self.min_eigenvalue:.3e})")


class TraceMismatch(StateValidationError):
    def __init__(self, trace):
        self.trace = trace
        super().__init__(f"trace must be 1 (got {trace})")


class ZeroMatrix(StateValidationError):
    pass


class BadRank(StateValidationError):
    pass


class DimensionMismatch(QWError, ValueError):
    pass


class NotHermitianPolynomial(QWError, ValueError):
    pass


class OrderTooSmall(QWError, ValueError):
    pass


class MalformedProblem(QWError, ValueError):
    pass


class UnsupportedCone(QWError, ValueError):
    pass


class ParseError(QWError, ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class SolverFailed(QWError, RuntimeError):
    def __init__(self, status, detail=""):
        self.status = status
        msg = f"solver did not reach an optimal solution (status={status})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NoDualAvailable(QWError, RuntimeError):
    pass


class AtomSetInfeasible(QWError, RuntimeError):
    pass
