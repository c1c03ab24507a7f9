"""Bilevel problem interface and smoothness constants."""

from dataclasses import dataclass

import numpy as np

from ..errors import UnsupportedProblem


@dataclass(frozen=True)
class ConstantsBundle:
    """Smoothness/convexity constants of a problem and the derived ones.

    ``L`` is the shared gradient Lipschitz constant max{L_f, L_g}, ``rho``
    and ``tau`` the Lipschitz constants of the inner Hessian and mixed
    derivative, ``M`` the Lipschitz constant of the outer objective and
    ``D`` a bound on the norm of the inner solution.
    """

    L: float
    mu_g: float
    rho: float
    tau: float
    M: float
    D: float

    @property
    def L_J(self):
        L, mu, rho, tau = self.L, self.mu_g, self.rho, self.tau
        return (1.0 + L / mu) * (tau / mu + rho * L / mu**2)

    @property
    def L_Phi(self):
        L, mu, rho, tau, M = self.L, self.mu_g, self.rho, self.tau, self.M
        return (
            L
            + (2 * L**2 + tau * M**2) / mu
            + (rho * L * M + L**3 + tau * M * L) / mu**2
            + rho * L**2 * M / mu**3
        )

    @property
    def M_Phi(self):
        return (1.0 + self.L / self.mu_g) * self.M


def rows(batch):
    """Index object selecting a minibatch; ``None`` means every sample."""
    return slice(None) if batch is None else np.asarray(batch)


class BilevelProblem:
    """min_x f(x, y*(x)) s.t. y*(x) = argmin_y g(x, y).

    Subclasses set ``p`` (outer dim), ``d`` (inner dim), ``m`` (inner
    sample count) and ``n`` (outer sample count) and implement the first
    order evaluations. ``batch`` arguments are index arrays into the inner
    (resp. outer) samples, ``None`` meaning the full sum.

    ``inner_grad_y`` additionally accepts stacked inputs ``x`` of shape
    ``(k, p)`` and ``y`` of shape ``(k, d)`` so that several inner runs can
    advance in lockstep over the same batch.
    """

    p: int
    d: int
    m: int = 1
    n: int = 1
    name = "problem"
    constants = None

    # -- first order ---------------------------------------------------
    def inner_value(self, x, y, batch=None):
        raise NotImplementedError

    def inner_grad_y(self, x, y, batch=None):
        raise NotImplementedError

    def outer_value(self, x, y, batch=None):
        raise NotImplementedError

    def outer_grad_x(self, x, y, batch=None):
        raise NotImplementedError

    def outer_grad_y(self, x, y, batch=None):
        raise NotImplementedError

    # -- optional ------------------------------------------------------
    has_second_order = False
    has_oracle = False

    def hess_vec(self, x, y, v):
        """Inner Hessian in y applied to ``v``."""
        raise UnsupportedProblem(f"{self.name} has no Hessian-vector oracle")

    def cross_vec(self, x, y, v):
        """(d/dx d/dy g)^T v, a p-vector."""
        raise UnsupportedProblem(f"{self.name} has no mixed-derivative oracle")

    def oracle(self, x):
        """Return ``(y*, J*, grad Phi)`` at ``x``."""
        raise UnsupportedProblem(f"{self.name} has no closed-form oracle")

    def initial_x(self, seed):
        return np.zeros(self.p)

    def initial_y(self):
        return np.zeros(self.d)

    def default_alpha(self):
        return 1e-3
