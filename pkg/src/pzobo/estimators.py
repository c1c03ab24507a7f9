"""Hypergradient estimators.

All estimators return an estimate of

    grad Phi(x) = grad_x f(x, y*(x)) + J*(x)^T grad_y f(x, y*(x)).

``pzobo`` and ``pzobo_s`` estimate only the response Jacobian J from the
difference of two inner trajectories, ``hozog`` estimates the whole
hypergradient from outer-value differences, ``itd`` and ``aid`` use
second-order products, and ``oracle`` uses a closed form.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import NonFiniteDelta, SolverFailure, UnsupportedProblem
from .inner import gd_inner, make_batch_path, sgd_inner


@dataclass(frozen=True)
class EstimatorConfig:
    N: int = 20
    Q: int = 1
    mu: float = 0.01
    alpha: float = 1e-3
    warm_start: bool = False
    S: int | None = None
    D_f: int | None = None

    def validate(self, problem=None, stochastic=False, min_N=1):
        if self.N < min_N:
            raise ValueError(f"N must be >= {min_N}, got {self.N}")
        if self.Q < 1:
            raise ValueError(f"Q must be >= 1, got {self.Q}")
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if stochastic:
            if self.S is None or self.D_f is None:
                raise ValueError("stochastic estimators need S and D_f")
            if problem is not None:
                if not 1 <= self.S <= problem.m:
                    raise ValueError(f"S={self.S} outside [1, m={problem.m}]")
                if not 1 <= self.D_f <= problem.n:
                    raise ValueError(f"D_f={self.D_f} outside [1, n={problem.n}]")
        return self


@dataclass
class HypergradEstimate:
    grad: np.ndarray
    y: np.ndarray
    deltas: np.ndarray | None = None
    inner_residual: float = 0.0
    inner_calls: int = 0
    outer_calls: int = 0
    info: dict = field(default_factory=dict)


def delta_jvp(delta, v, u):
    """J_hat^T v for J_hat = delta u^T, without forming the d x p matrix."""
    delta, v, u = np.asarray(delta), np.asarray(v), np.asarray(u)
    if delta.shape != v.shape:
        raise ValueError(f"delta {delta.shape} and v {v.shape} differ")
    return np.dot(delta, v) * u


def _deltas(y_pert, y_base, mu):
    # difference first, then scale; keeps the cancellation in one place
    deltas = (y_pert - y_base) / mu
    if not np.all(np.isfinite(deltas)):
        raise NonFiniteDelta(f"non-finite trajectory difference for mu={mu:g}")
    return deltas


def _perturbed_points(x, u, mu):
    X = np.vstack([x, x + mu * u])
    lost = np.all(X[1:] == x, axis=1)
    if np.any(lost):
        raise NonFiniteDelta(f"perturbation mu={mu:g} vanishes in floating point")
    return X


def _start(problem, y0):
    return problem.initial_y() if y0 is None else y0


def _partial_estimate(problem, x, y_runs, u, config, batch, inner_calls, residual):
    y_base = y_runs[0]
    deltas = _deltas(y_runs[1:], y_base, config.mu)
    gx = problem.outer_grad_x(x, y_base, batch)
    gy = problem.outer_grad_y(x, y_base, batch)
    # sum_j <delta_j, gy> u_j, accumulated over j in index order
    grad = gx + (deltas @ gy) @ u / config.Q
    return HypergradEstimate(grad=grad, y=y_base, deltas=deltas, inner_residual=float(residual[0]),
                             inner_calls=inner_calls, outer_calls=2)


def pzobo_hypergradient(problem, x, config, seed, k=0, y0=None):
    """Partial zeroth-order estimate with Q full-GD perturbed trajectories."""
    config.validate(problem)
    x = np.asarray(x, dtype=float)
    u = _rng.gaussian_directions(seed, k, config.Q, problem.p)
    run = gd_inner(problem, _perturbed_points(x, u, config.mu), _start(problem, y0),
                   config.alpha, config.N)
    return _partial_estimate(problem, x, run.y, u, config, None, run.grad_calls, run.residual)


def outer_batch(seed, k, n, D_f):
    if D_f == n:
        return np.arange(n)
    rng = _rng.substream(seed, _rng.OUTER_BATCH, k)
    return np.sort(rng.choice(n, size=D_f, replace=False))


def pzobo_s_hypergradient(problem, x, config, seed, k=0, y0=None):
    """Stochastic variant: every trajectory follows one shared batch path and
    the outer gradients use an independent outer batch."""
    config.validate(problem, stochastic=True)
    x = np.asarray(x, dtype=float)
    u = _rng.gaussian_directions(seed, k, config.Q, problem.p)
    path = make_batch_path(seed, config.N, problem.m, config.S, key=(k,))
    run = sgd_inner(problem, _perturbed_points(x, u, config.mu), _start(problem, y0),
                    config.alpha, path)
    batch = outer_batch(seed, k, problem.n, config.D_f)
    return _partial_estimate(problem, x, run.y, u, config, batch, run.grad_calls, run.residual)


def hozog_hypergradient(problem, x, config, seed, k=0, y0=None):
    """Full zeroth-order estimate from differences of f(x, y^N(x))."""
    config.validate(problem)
    x = np.asarray(x, dtype=float)
    u = _rng.gaussian_directions(seed, k, config.Q, problem.p)
    X = _perturbed_points(x, u, config.mu)
    run = gd_inner(problem, X, _start(problem, y0), config.alpha, config.N)
    values = np.array([problem.outer_value(X[i], run.y[i]) for i in range(config.Q + 1)])
    coef = (values[1:] - values[0]) / config.mu
    if not np.all(np.isfinite(coef)):
        raise NonFiniteDelta(f"non-finite outer-value difference for mu={config.mu:g}")
    grad = coef @ u / config.Q
    return HypergradEstimate(grad=grad, y=run.y[0], inner_residual=float(run.residual[0]),
                             inner_calls=run.grad_calls, outer_calls=config.Q + 1)


def _require_second_order(problem):
    if not problem.has_second_order:
        raise UnsupportedProblem(f"{problem.name} does not provide hess_vec/cross_vec")


def unrolled_vjp(problem, x, trajectory, alpha, v):
    """J_N^T v by running the Jacobian recursion backwards over a GD trajectory.

    Forward: J_t = (I - alpha H_{t-1}) J_{t-1} - alpha C_{t-1}, J_0 = 0, with
    H, C the inner Hessian and mixed derivative at y_{t-1}.
    """
    a = np.array(v, dtype=float)
    out = np.zeros(problem.p)
    for t in range(len(trajectory) - 1, 0, -1):
        y_prev = trajectory[t - 1]
        out -= alpha * problem.cross_vec(x, y_prev, a)
        a = a - alpha * problem.hess_vec(x, y_prev, a)
    return out


def itd_jacobian(problem, x, alpha, N, y0=None):
    """Materialized J_N (d x p), one reverse pass per output coordinate."""
    _require_second_order(problem)
    run = gd_inner(problem, x, _start(problem, y0), alpha, N, keep_trajectory=True)
    return np.stack([unrolled_vjp(problem, x, run.trajectory, alpha, e) for e in np.eye(problem.d)])


def itd_hypergradient(problem, x, config, y0=None):
    """Exact gradient of x -> f(x, y^N(x)) through N GD steps."""
    _require_second_order(problem)
    config.validate(problem, min_N=0)
    x = np.asarray(x, dtype=float)
    run = gd_inner(problem, x, _start(problem, y0), config.alpha, config.N, keep_trajectory=True)
    y = run.y
    grad = problem.outer_grad_x(x, y) + unrolled_vjp(
        problem, x, run.trajectory, config.alpha, problem.outer_grad_y(x, y))
    return HypergradEstimate(grad=grad, y=y, inner_residual=run.residual,
                             inner_calls=run.grad_calls, outer_calls=2,
                             info={"hess_vec_calls": config.N, "cross_vec_calls": config.N})


def conjugate_gradient(matvec, b, iters=100, tol=1e-10):
    """Solve H v = b for symmetric positive definite H.

    Stops when ||b - H v|| <= tol * ||b||. ``tol=None`` runs exactly
    ``iters`` iterations (or until the residual vanishes). Returns
    ``(v, iterations, residual_norm)``.
    """
    b = np.asarray(b, dtype=float)
    v = np.zeros_like(b)
    r = b.copy()
    d = r.copy()
    rr = r @ r
    b_norm = np.sqrt(rr)
    target = 0.0 if tol is None else tol * b_norm
    it = 0
    while it < iters and np.sqrt(rr) > target:
        Hd = matvec(d)
        curv = d @ Hd
        if curv <= 0:
            raise SolverFailure("CG breakdown: matrix not positive definite", np.sqrt(rr))
        step = rr / curv
        v += step * d
        r -= step * Hd
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    res = float(np.sqrt(rr))
    if tol is not None and res > target:
        raise SolverFailure(f"CG hit the {iters}-iteration cap", res)
    return v, it, res


def fixed_point_solve(matvec, b, step, iters=100, tol=1e-10):
    """Iterate v <- v - step (H v - b) from v = 0; same contract as CG."""
    b = np.asarray(b, dtype=float)
    v = np.zeros_like(b)
    b_norm = np.linalg.norm(b)
    target = 0.0 if tol is None else tol * b_norm
    res = b_norm
    it = 0
    while it < iters and res > target:
        r = matvec(v) - b
        v = v - step * r
        it += 1
        res = np.linalg.norm(matvec(v) - b) if tol is not None else np.linalg.norm(r)
    if not np.isfinite(res):
        raise SolverFailure("fixed-point iteration diverged", res)
    if tol is not None and res > target:
        raise SolverFailure(f"fixed-point iteration hit the {iters}-iteration cap", res)
    return v, it, float(res)


def aid_hypergradient(problem, x, config, solver="cg", iters=100, tol=1e-10, y0=None):
    """Implicit differentiation at y^N: solve H v = grad_y f, return grad_x f - C^T v."""
    _require_second_order(problem)
    config.validate(problem)
    x = np.asarray(x, dtype=float)
    run = gd_inner(problem, x, _start(problem, y0), config.alpha, config.N)
    y = run.y
    rhs = problem.outer_grad_y(x, y)

    def H(v):
        return problem.hess_vec(x, y, v)

    if solver == "cg":
        v, it, res = conjugate_gradient(H, rhs, iters, tol)
    elif solver == "fp":
        v, it, res = fixed_point_solve(H, rhs, config.alpha, iters, tol)
    else:
        raise ValueError(f"unknown AID solver {solver!r}")
    grad = problem.outer_grad_x(x, y) - problem.cross_vec(x, y, v)
    return HypergradEstimate(grad=grad, y=y, inner_residual=run.residual,
                             inner_calls=run.grad_calls, outer_calls=2,
                             info={"solver_iterations": it, "solver_residual": res})


def oracle_hypergradient(problem, x):
    if not problem.has_oracle:
        raise UnsupportedProblem(f"{problem.name} has no closed-form oracle")
    x = np.asarray(x, dtype=float)
    y_star, J_star, _ = problem.oracle(x)
    grad = problem.outer_grad_x(x, y_star) + J_star.T @ problem.outer_grad_y(x, y_star)
    return HypergradEstimate(grad=grad, y=y_star, inner_residual=0.0)


ESTIMATORS = ("pzobo", "pzobo-s", "hozog", "itd", "aid-cg", "aid-fp", "oracle")
STOCHASTIC = ("pzobo-s",)
SECOND_ORDER = ("itd", "aid-cg", "aid-fp")


def estimate(name, problem, x, config, seed=0, k=0, y0=None, aid_iters=100, aid_tol=1e-10):
    """Dispatch by estimator name; ``k`` addresses the random substreams."""
    if name == "pzobo":
        return pzobo_hypergradient(problem, x, config, seed, k, y0)
    if name == "pzobo-s":
        return pzobo_s_hypergradient(problem, x, config, seed, k, y0)
    if name == "hozog":
        return hozog_hypergradient(problem, x, config, seed, k, y0)
    if name == "itd":
        return itd_hypergradient(problem, x, config, y0)
    if name in ("aid-cg", "aid-fp"):
        return aid_hypergradient(problem, x, config, name[4:], aid_iters, aid_tol, y0)
    if name == "oracle":
        return oracle_hypergradient(problem, x)
    raise ValueError(f"unknown estimator {name!r}; expected one of {', '.join(ESTIMATORS)}")
