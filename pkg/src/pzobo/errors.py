"""Exception hierarchy shared by the solvers, estimators and harness."""


class BilevelError(Exception):
    """Base class for numerical failures raised by this package."""


class InnerDivergence(BilevelError):
    """The inner GD/SGD iterate became non-finite or exploded."""

    def __init__(self, step, norm):
        self.step = step
        self.norm = norm
        super().__init__(f"inner iterate diverged at step {step} (norm={norm:.3g})")


class NonFiniteDelta(BilevelError):
    """A trajectory difference could not be formed (usually mu too small)."""


class SolverFailure(BilevelError):
    """CG/fixed-point linear solve broke down or hit its iteration cap."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class UnsupportedProblem(BilevelError):
    """The problem does not expose an evaluation the estimator needs."""
