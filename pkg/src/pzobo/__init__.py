"""Hessian-free bilevel optimization with partial zeroth-order hypergradients."""

from .errors import (BilevelError, InnerDivergence, NonFiniteDelta, SolverFailure,
                     UnsupportedProblem)
from .estimators import (EstimatorConfig, HypergradEstimate, aid_hypergradient, delta_jvp,
                         estimate, hozog_hypergradient, itd_hypergradient, itd_jacobian,
                         oracle_hypergradient, pzobo_hypergradient, pzobo_s_hypergradient)
from .inner import BatchPath, InnerRun, gd_inner, make_batch_path, sgd_inner
from .outer import OuterState, adam_step, gd_step

__version__ = "0.1.0"

__all__ = [
    "BatchPath", "BilevelError", "EstimatorConfig", "HypergradEstimate", "InnerDivergence",
    "InnerRun", "NonFiniteDelta", "OuterState", "SolverFailure", "UnsupportedProblem",
    "adam_step", "aid_hypergradient", "delta_jvp", "estimate", "gd_inner", "gd_step",
    "hozog_hypergradient", "itd_hypergradient", "itd_jacobian", "make_batch_path",
    "oracle_hypergradient", "pzobo_hypergradient", "pzobo_s_hypergradient", "sgd_inner",
]
