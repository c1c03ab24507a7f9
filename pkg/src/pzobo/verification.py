"""Independent oracles and Monte-Carlo probes for the estimators.

Nothing here reuses the estimators' own derivative code: Jacobians come
from central finite differences of whole inner runs and reference
hypergradients from closed forms or finite differences of f(x, y^M(x)).
"""

import csv
from dataclasses import asdict, dataclass

import numpy as np

from . import estimators as est
from .inner import gd_inner, make_batch_path, sgd_inner


def finite_diff_jacobian(problem, x, N, h=1e-5, *, alpha, y0=None, path=None):
    """Central differences of x -> y^N(x), column by column (2p inner runs).

    With ``path`` the runs are SGD over that shared batch path instead of GD.
    """
    if not h > 0:
        raise ValueError("h must be > 0")
    x = np.asarray(x, dtype=float)
    y0 = problem.initial_y() if y0 is None else y0
    E = np.eye(problem.p) * h
    X = np.vstack([x + E, x - E])
    if path is None:
        Y = gd_inner(problem, X, y0, alpha, N).y
    else:
        Y = sgd_inner(problem, X, y0, alpha, path).y
    return ((Y[:problem.p] - Y[problem.p:]) / (2 * h)).T


def fd_hypergradient(problem, x, M, h=1e-5, *, alpha, y0=None):
    """Central differences of x -> f(x, y^M(x)); the reference when no oracle exists."""
    x = np.asarray(x, dtype=float)
    y0 = problem.initial_y() if y0 is None else y0
    E = np.eye(problem.p) * h
    X = np.vstack([x + E, x - E])
    Y = gd_inner(problem, X, y0, alpha, M).y
    vals = np.array([problem.outer_value(X[i], Y[i]) for i in range(2 * problem.p)])
    return (vals[:problem.p] - vals[problem.p:]) / (2 * h)


def reference_hypergradient(problem, x, *, alpha, M, h=1e-5):
    """Return ``(grad, source)``: the closed form if available, else finite differences."""
    if problem.has_oracle:
        return est.oracle_hypergradient(problem, x).grad, "oracle"
    return fd_hypergradient(problem, x, M, h, alpha=alpha), "finite-difference"


@dataclass
class BiasVarianceReport:
    estimator: str
    N: int
    Q: int
    mu: float
    S: int | None
    D_f: int | None
    trials: int
    mean: np.ndarray
    bias: float
    variance: float
    ref_source: str

    CSV_COLUMNS = ("estimator", "N", "Q", "mu", "S", "trials", "bias", "variance", "ref_source")

    def csv_row(self):
        row = asdict(self)
        return {k: ("" if row[k] is None else row[k]) for k in self.CSV_COLUMNS}


def estimate_bias_variance(problem, x, estimator, config, trials, seed, reference=None,
                           reference_steps=None):
    """Run ``estimator`` ``trials`` times on independent substreams.

    Trial ``i`` uses substream key ``k = i``. Variance is the mean squared
    deviation of the trial estimates from their mean; bias is the norm of
    (mean - reference).
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    x = np.asarray(x, dtype=float)
    if reference is None:
        M = reference_steps or 10 * config.N
        reference, source = reference_hypergradient(problem, x, alpha=config.alpha, M=M)
    else:
        source = "given"
    grads = np.stack([est.estimate(estimator, problem, x, config, seed=seed, k=i).grad
                      for i in range(trials)])
    # shifted by the first trial so deterministic estimators give exactly zero spread
    shifted = grads - grads[0]
    centered = shifted - shifted.mean(axis=0)
    mean = grads[0] + shifted.mean(axis=0)
    variance = float(np.mean(np.sum(centered**2, axis=1)))
    return BiasVarianceReport(
        estimator=estimator, N=config.N, Q=config.Q, mu=config.mu, S=config.S, D_f=config.D_f,
        trials=trials, mean=mean, bias=float(np.linalg.norm(mean - reference)),
        variance=variance, ref_source=source)


def write_report_csv(reports, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=BiasVarianceReport.CSV_COLUMNS)
            writer.writeheader()
            for r in reports:
                row = r.csv_row()
                for key in ("mu", "bias", "variance"):
                    row[key] = format(row[key], ".17g")
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"could not write report to {path}: {exc}") from exc


def lipschitz_probe(problem, x1, x2, N, h=1e-5, *, alpha):
    """||J_N(x1) - J_N(x2)||_F / ||x1 - x2|| with finite-difference Jacobians."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    gap = np.linalg.norm(x1 - x2)
    if gap == 0:
        raise ValueError("x1 and x2 must differ")
    J1 = finite_diff_jacobian(problem, x1, N, h, alpha=alpha)
    J2 = finite_diff_jacobian(problem, x2, N, h, alpha=alpha)
    return float(np.linalg.norm(J1 - J2) / gap)


def constants_for_quadratic(problem, center=None, radius=1.0):
    """ConstantsBundle with M and D taken over ||x - center|| <= radius."""
    return problem.constants_on_ball(center, radius)


@dataclass(frozen=True)
class StochasticJacobianConstants:
    """Constants of the shared-path SGD Jacobian error bound.

    ``gamma`` defaults to its smallest admissible value (L + mu_g) / mu_g^2,
    ``alpha`` to 2 / (L + mu_g).
    """

    alpha: float
    gamma: float
    C_gamma: float
    C_xy: float
    C_y: float
    Gamma: float
    lam: float
    L: float
    mu_g: float

    def bound(self, N):
        """Upper bound on E||J_N - J*||_F^2 after N SGD steps."""
        L, mu, a, Cg = self.L, self.mu_g, self.alpha, self.C_gamma
        q = 1 - a * mu
        denom = (L + mu) ** 2 * q - (L - mu) ** 2
        transient = self.lam * (L + mu) ** 2 * q * Cg ** (N - 1) / denom if self.lam else 0.0
        return Cg**N * L**2 / mu**2 + transient + self.Gamma / (1 - Cg)


def stochastic_jacobian_constants(bundle, S, sigma, alpha=None, gamma=None):
    L, mu, rho, tau, D = bundle.L, bundle.mu_g, bundle.rho, bundle.tau, bundle.D
    alpha = 2.0 / (L + mu) if alpha is None else alpha
    gamma = (L + mu) / mu**2 if gamma is None else gamma
    q = 1 - alpha * mu
    C_gamma = q * (q + alpha / gamma + alpha * L / (gamma * mu))
    C_xy = alpha * (alpha + gamma * q + alpha * L / mu)
    C_y = L / mu * C_xy
    mixed = 2 * (tau**2 * C_xy + rho**2 * C_y)
    Gamma = mixed * sigma**2 / (mu * L * S) + 2 * L**2 / S * (C_xy + C_y)
    return StochasticJacobianConstants(alpha=alpha, gamma=gamma, C_gamma=C_gamma, C_xy=C_xy,
                                       C_y=C_y, Gamma=Gamma, lam=mixed * D**2, L=L, mu_g=mu)


def estimate_sigma(problem, x, y):
    """sqrt of the mean per-sample squared deviation of grad_y G from grad_y g."""
    full = problem.inner_grad_y(x, y)
    dev = [problem.inner_grad_y(x, y, [i]) - full for i in range(problem.m)]
    return float(np.sqrt(np.mean(np.sum(np.square(dev), axis=1))))


def jacobian_error_sq(problem, x, N, alpha, S, trials, seed, h=1e-5):
    """Monte-Carlo E||J_N - J*||_F^2 with J_N from FD of shared-path SGD runs."""
    J_star = problem.oracle(x)[1]
    errs = np.empty(trials)
    for i in range(trials):
        path = make_batch_path(seed, N, problem.m, S, key=(i,))
        J = finite_diff_jacobian(problem, x, N, h, alpha=alpha, path=path)
        errs[i] = np.sum((J - J_star) ** 2)
    return float(errs.mean())
