"""Quadratic bilevel family with a closed-form hypergradient.

Inner:  g(x, y) = 1/2 y^T A y - (B x + c)^T y
Outer:  f(x, y) = 1/2 ||y - y_t||^2 + lam_r/2 ||x||^2

With ``m > 1`` (resp. ``n > 1``) the inner (outer) objective is the mean
of per-sample components whose averages are A, B, c (resp. y_t).
"""

import numpy as np

from .. import _rng
from .base import BilevelProblem, ConstantsBundle, rows


class QuadraticProblem(BilevelProblem):
    has_second_order = True
    has_oracle = True
    name = "quadratic"

    def __init__(self, A, B, c, y_target, lam_r=0.0, seed=0):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        c = np.asarray(c, dtype=float)
        y_target = np.asarray(y_target, dtype=float)
        if A.ndim == 2:
            A, B, c = A[None], B[None], c[None]
        if y_target.ndim == 1:
            y_target = y_target[None]
        self.A_i, self.B_i, self.c_i, self.yt_i = A, B, c, y_target
        self.m, self.d, _ = A.shape
        self.p = B.shape[2]
        self.n = y_target.shape[0]
        self.lam_r = float(lam_r)
        self.seed = seed
        self.A = A.mean(axis=0)
        self.B = B.mean(axis=0)
        self.c = c.mean(axis=0)
        self.y_target = y_target.mean(axis=0)
        eig = np.linalg.eigvalsh(self.A)
        if eig[0] <= 0:
            raise ValueError("inner Hessian A must be positive definite")
        self.mu_g = float(eig[0])
        self.L_g = float(eig[-1])
        # largest curvature any minibatch can see; bounds the stable SGD step
        self.L_max = float(max(np.linalg.eigvalsh(a)[-1] for a in A))

    def _inner(self, batch):
        if batch is None:
            return self.A, self.B, self.c
        idx = np.asarray(batch)
        return (self.A_i[idx].mean(axis=0), self.B_i[idx].mean(axis=0),
                self.c_i[idx].mean(axis=0))

    def inner_value(self, x, y, batch=None):
        A, B, c = self._inner(batch)
        return 0.5 * y @ A @ y - (B @ x + c) @ y

    def inner_grad_y(self, x, y, batch=None):
        A, B, c = self._inner(batch)
        return y @ A.T - (x @ B.T + c)

    def outer_value(self, x, y, batch=None):
        diff = y - self.yt_i[rows(batch)]
        return 0.5 * np.mean(np.sum(diff**2, axis=1)) + 0.5 * self.lam_r * (x @ x)

    def outer_grad_x(self, x, y, batch=None):
        return self.lam_r * x

    def outer_grad_y(self, x, y, batch=None):
        if batch is None:
            return y - self.y_target
        return y - self.yt_i[np.asarray(batch)].mean(axis=0)

    def hess_vec(self, x, y, v):
        return self.A @ v

    def cross_vec(self, x, y, v):
        return -self.B.T @ v

    def oracle(self, x):
        y_star = np.linalg.solve(self.A, self.B @ x + self.c)
        J_star = np.linalg.solve(self.A, self.B)
        grad = self.lam_r * x + J_star.T @ (y_star - self.y_target)
        return y_star, J_star, grad

    def phi(self, x):
        """Phi(x) = f(x, y*(x))."""
        return self.outer_value(x, self.oracle(x)[0])

    def initial_x(self, seed):
        return _rng.substream(seed, _rng.INIT).standard_normal(self.p)

    def default_alpha(self):
        return 1.0 / self.L_max

    def constants_on_ball(self, center=None, radius=1.0):
        """Constants with M and D evaluated over ||x - center|| <= radius."""
        center = np.zeros(self.p) if center is None else np.asarray(center)
        x_max = np.linalg.norm(center) + radius
        inv_norm = 1.0 / self.mu_g
        D = inv_norm * (np.linalg.norm(self.B, 2) * x_max + np.linalg.norm(self.c))
        M = np.hypot(self.lam_r * x_max, D + np.linalg.norm(self.y_target))
        L = max(self.L_g, 1.0, self.lam_r)
        return ConstantsBundle(L=L, mu_g=self.mu_g, rho=0.0, tau=0.0, M=float(M), D=float(D))

    @property
    def constants(self):
        return self.constants_on_ball()


def _centered(noise):
    return noise - noise.mean(axis=0, keepdims=True)


def quadratic_make(seed, p, d, conditioning, m=1, n=1, lam_r=0.1, spread=0.5):
    """Random quadratic instance with inner spectrum in [1, conditioning].

    ``m``/``n`` > 1 split the inner/outer objectives into that many
    per-sample components; ``spread`` sets the size of the zero-mean
    per-sample perturbations (for A it is relative to the smallest
    eigenvalue, so every component stays positive definite).
    """
    if p < 1 or d < 1 or m < 1 or n < 1:
        raise ValueError("p, d, m, n must be >= 1")
    if not conditioning >= 1:
        raise ValueError(f"conditioning must be >= 1, got {conditioning}")
    rng = _rng.substream(seed, _rng.DATA)
    mu_g, L = 1.0, float(conditioning)
    if d == 1:
        eig = np.array([mu_g])
    else:
        eig = np.concatenate([[mu_g, L], rng.uniform(mu_g, L, size=d - 2)])
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = (Q * eig) @ Q.T
    A = 0.5 * (A + A.T)
    B = rng.standard_normal((d, p)) / np.sqrt(p)
    c = rng.standard_normal(d)
    y_t = rng.standard_normal(d)

    A_i = np.broadcast_to(A, (m, d, d)).copy()
    B_i = np.broadcast_to(B, (m, d, p)).copy()
    c_i = np.broadcast_to(c, (m, d)).copy()
    yt_i = np.broadcast_to(y_t, (n, d)).copy()
    if m > 1:
        E = rng.standard_normal((m, d, d))
        E = _centered(0.5 * (E + E.transpose(0, 2, 1)))
        scale = max(np.abs(np.linalg.eigvalsh(e)).max() for e in E)
        A_i += E * (spread * mu_g / scale)
        B_i += _centered(rng.standard_normal((m, d, p))) * (spread / np.sqrt(p))
        c_i += _centered(rng.standard_normal((m, d))) * spread
    if n > 1:
        yt_i += _centered(rng.standard_normal((n, d))) * spread
    return QuadraticProblem(A_i, B_i, c_i, yt_i, lam_r=lam_r, seed=seed)
