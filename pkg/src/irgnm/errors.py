class SolverError(RuntimeError):
    """Base class for numerical failures inside a Gauss-Newton run.

    Drivers attach the partial trajectory collected before the failure as
    ``trajectory``.
    """

    trajectory = None


class KrylovError(SolverError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class FactorizationError(SolverError):
    pass


class PDESolveError(SolverError):
    pass
