"""Shallow hyper-representation: learn an embedding T(X; lam) in the outer
problem while the inner problem fits a ridge regressor w on top of it.

    f(lam)   = 1/(2 n1) ||T(X1; lam) w* - Y1||^2
    w*(lam)  = argmin_w 1/(2 n2) ||T(X2; lam) w - Y2||^2 + gamma/2 ||w||^2
"""

from dataclasses import dataclass

import numpy as np

from .. import _rng
from .base import BilevelProblem, rows


class LinearEmbedding:
    """T(X; lam) = X @ lam.reshape(m, d)."""

    kind = "linear"

    def __init__(self, m, d):
        self.m, self.d = m, d
        self.n_params = m * d

    def forward(self, X, lam):
        lam = np.asarray(lam)
        return X @ lam.reshape(lam.shape[:-1] + (self.m, self.d))

    def vjp(self, X, lam, C):
        return (X.T @ C).ravel()

    def init_params(self, rng):
        return rng.standard_normal(self.n_params) / np.sqrt(self.m)


class TwoLayerEmbedding:
    """T(X; lam) = tanh(X W1 + b1) W2 + b2."""

    kind = "two-layer"

    def __init__(self, m, hidden, d):
        self.m, self.h, self.d = m, hidden, d
        self._shapes = [(m, hidden), (hidden,), (hidden, d), (d,)]
        self._sizes = [int(np.prod(s)) for s in self._shapes]
        self.n_params = sum(self._sizes)

    def unpack(self, lam):
        lam = np.asarray(lam)
        lead = lam.shape[:-1]
        out, start = [], 0
        for shape, size in zip(self._shapes, self._sizes):
            out.append(lam[..., start:start + size].reshape(lead + shape))
            start += size
        return out

    def _hidden(self, X, W1, b1):
        return np.tanh(X @ W1 + b1[..., None, :])

    def forward(self, X, lam):
        W1, b1, W2, b2 = self.unpack(lam)
        return self._hidden(X, W1, b1) @ W2 + b2[..., None, :]

    def vjp(self, X, lam, C):
        W1, b1, W2, _ = self.unpack(lam)
        H = self._hidden(X, W1, b1)
        dZ = (C @ W2.T) * (1.0 - H**2)
        return np.concatenate([(X.T @ dZ).ravel(), dZ.sum(axis=0),
                               (H.T @ C).ravel(), C.sum(axis=0)])

    def init_params(self, rng):
        W1 = rng.standard_normal((self.m, self.h)) / np.sqrt(self.m)
        W2 = rng.standard_normal((self.h, self.d)) / np.sqrt(self.h)
        return np.concatenate([W1.ravel(), np.zeros(self.h), W2.ravel(), np.zeros(self.d)])


def make_embedding(kind, m, d, hidden=32):
    if kind == "linear":
        return LinearEmbedding(m, d)
    if kind in ("two-layer", "2layer"):
        return TwoLayerEmbedding(m, hidden, d)
    raise ValueError(f"unknown embedding kind {kind!r}")


@dataclass
class HRDataset:
    X1: np.ndarray
    Y1: np.ndarray
    X2: np.ndarray
    Y2: np.ndarray
    gamma: float
    kind: str
    hidden: int
    d: int
    seed: int
    noise_sd: float
    true_lambda: np.ndarray
    true_w: np.ndarray

    @property
    def embedding(self):
        return make_embedding(self.kind, self.X1.shape[1], self.d, self.hidden)


def generate_hr_dataset(seed, n1, n2, m, d, noise_sd, kind="linear", gamma=0.1, hidden=32):
    """Synthetic regression data generated by a ground-truth embedding.

    X1, X2 have i.i.d. standard normal entries; Y = T_true(X) w_true + eps
    with eps ~ N(0, noise_sd^2). Everything is drawn from the seed's data
    stream in a fixed order.
    """
    if min(n1, n2, m, d) < 1 or hidden < 1:
        raise ValueError("dataset dimensions must be >= 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    if gamma <= 0:
        raise ValueError("gamma must be > 0 for a strongly convex inner problem")
    rng = _rng.substream(seed, _rng.DATA)
    emb = make_embedding(kind, m, d, hidden)
    X1 = rng.standard_normal((n1, m))
    X2 = rng.standard_normal((n2, m))
    true_lambda = emb.init_params(rng)
    if kind != "linear":
        # nonzero biases so the ground truth exercises every parameter
        W1, b1, W2, b2 = emb.unpack(true_lambda)
        true_lambda = np.concatenate([W1.ravel(), 0.1 * rng.standard_normal(b1.size),
                                      W2.ravel(), 0.1 * rng.standard_normal(b2.size)])
    true_w = rng.standard_normal(d) / np.sqrt(d)
    Y1 = emb.forward(X1, true_lambda) @ true_w + noise_sd * rng.standard_normal(n1)
    Y2 = emb.forward(X2, true_lambda) @ true_w + noise_sd * rng.standard_normal(n2)
    return HRDataset(X1=X1, Y1=Y1, X2=X2, Y2=Y2, gamma=float(gamma), kind=emb.kind,
                     hidden=int(hidden), d=int(d), seed=int(seed), noise_sd=float(noise_sd),
                     true_lambda=true_lambda, true_w=true_w)


class HRProblem(BilevelProblem):
    has_second_order = True
    has_oracle = True

    def __init__(self, data: HRDataset):
        self.data = data
        self.emb = data.embedding
        self.name = f"hr-{self.emb.kind}"
        self.p = self.emb.n_params
        self.d = data.d
        self.m = data.X2.shape[0]
        self.n = data.X1.shape[0]
        self.gamma = data.gamma
        self.mu_g = data.gamma

    @staticmethod
    def _residual(T, w, Y):
        return (T @ w[..., :, None])[..., 0] - Y

    def inner_value(self, x, w, batch=None):
        b = rows(batch)
        r = self._residual(self.emb.forward(self.data.X2[b], x), w, self.data.Y2[b])
        return 0.5 * np.mean(r**2) + 0.5 * self.gamma * (w @ w)

    def inner_grad_y(self, x, w, batch=None):
        b = rows(batch)
        T = self.emb.forward(self.data.X2[b], x)
        r = self._residual(T, w, self.data.Y2[b])
        return (r[..., None, :] @ T)[..., 0, :] / r.shape[-1] + self.gamma * w

    def outer_value(self, x, w, batch=None):
        b = rows(batch)
        r = self._residual(self.emb.forward(self.data.X1[b], x), w, self.data.Y1[b])
        return 0.5 * np.mean(r**2)

    def outer_grad_y(self, x, w, batch=None):
        b = rows(batch)
        T = self.emb.forward(self.data.X1[b], x)
        r = self._residual(T, w, self.data.Y1[b])
        return r @ T / r.size

    def outer_grad_x(self, x, w, batch=None):
        b = rows(batch)
        X = self.data.X1[b]
        r = self._residual(self.emb.forward(X, x), w, self.data.Y1[b])
        return self.emb.vjp(X, x, np.outer(r, w) / r.size)

    def _inner_hessian(self, x):
        T = self.emb.forward(self.data.X2, x)
        return T.T @ T / self.m + self.gamma * np.eye(self.d), T

    def hess_vec(self, x, w, v):
        T = self.emb.forward(self.data.X2, x)
        return T.T @ (T @ v) / self.m + self.gamma * v

    def cross_vec(self, x, w, v):
        X = self.data.X2
        T = self.emb.forward(X, x)
        r = T @ w - self.data.Y2
        C = (np.outer(r, v) + np.outer(T @ v, w)) / self.m
        return self.emb.vjp(X, x, C)

    def solve_inner(self, x):
        """Exact ridge solution w*(x)."""
        H, T = self._inner_hessian(x)
        return np.linalg.solve(H, T.T @ self.data.Y2 / self.m)

    def oracle(self, x):
        """Closed-form ridge solution and implicit-function hypergradient."""
        H, _ = self._inner_hessian(x)
        w_star = self.solve_inner(x)
        cross = np.stack([self.cross_vec(x, w_star, e) for e in np.eye(self.d)])
        J_star = -np.linalg.solve(H, cross)
        grad = self.outer_grad_x(x, w_star) + J_star.T @ self.outer_grad_y(x, w_star)
        return w_star, J_star, grad

    def phi(self, x):
        return self.outer_value(x, self.solve_inner(x))

    def initial_x(self, seed):
        return self.emb.init_params(_rng.substream(seed, _rng.INIT))


def make_hr_problem(data):
    return HRProblem(data)
