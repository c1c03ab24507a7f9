"""Per-weight l2 hyperparameter optimization for an affine softmax classifier.

Inner: mean training cross-entropy + 1/2 sum_i exp(lam_i) w_i^2
Outer: mean validation cross-entropy (does not depend on lam directly)

``w`` is the flattened (features + 1) x classes weight matrix, last row
holding the biases; ``lam`` has one entry per weight.
"""

from dataclasses import dataclass

import numpy as np

from .. import _rng
from .base import BilevelProblem, rows


@dataclass
class HODataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    classes: int
    seed: int
    true_W: np.ndarray


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def generate_ho_dataset(seed, n_train, n_val, features, classes):
    """Features i.i.d. N(0, 1); labels drawn from a ground-truth softmax model."""
    if classes < 2:
        raise ValueError("classes must be >= 2")
    if min(n_train, n_val, features) < 1:
        raise ValueError("sample counts and features must be >= 1")
    rng = _rng.substream(seed, _rng.DATA)
    true_W = rng.standard_normal((features + 1, classes)) / np.sqrt(features)

    def sample(n):
        X = rng.standard_normal((n, features))
        P = _softmax(_augment(X) @ true_W)
        u = rng.random(n)
        labels = np.minimum((P.cumsum(axis=1) < u[:, None]).sum(axis=1), classes - 1)
        return X, labels

    X_train, y_train = sample(n_train)
    X_val, y_val = sample(n_val)
    return HODataset(X_train=X_train, y_train=y_train, X_val=X_val, y_val=y_val,
                     classes=int(classes), seed=int(seed), true_W=true_W)


class LogisticHOProblem(BilevelProblem):
    has_second_order = True
    name = "ho-logistic"

    def __init__(self, data: HODataset):
        self.data = data
        self.c = data.classes
        self.f1 = data.X_train.shape[1] + 1
        self.p = self.d = self.f1 * self.c
        self.m = data.X_train.shape[0]
        self.n = data.X_val.shape[0]
        self._Xtr = _augment(data.X_train)
        self._Xval = _augment(data.X_val)
        self._Ytr = np.eye(self.c)[data.y_train]
        self._Yval = np.eye(self.c)[data.y_val]

    def _W(self, w):
        w = np.asarray(w)
        return w.reshape(w.shape[:-1] + (self.f1, self.c))

    @staticmethod
    def _ce(X, Y, W):
        return -np.mean(np.sum(Y * _log_softmax(X @ W), axis=-1), axis=-1)

    def inner_value(self, x, w, batch=None):
        b = rows(batch)
        return self._ce(self._Xtr[b], self._Ytr[b], self._W(w)) + 0.5 * np.sum(np.exp(x) * w**2)

    def inner_grad_y(self, x, w, batch=None):
        b = rows(batch)
        X, Y = self._Xtr[b], self._Ytr[b]
        W = self._W(w)
        G = X.T @ (_softmax(X @ W) - Y) / X.shape[0]
        return G.reshape(np.shape(w)) + np.exp(x) * w

    def outer_value(self, x, w, batch=None):
        b = rows(batch)
        return self._ce(self._Xval[b], self._Yval[b], self._W(w))

    def outer_grad_x(self, x, w, batch=None):
        return np.zeros(self.p)

    def outer_grad_y(self, x, w, batch=None):
        b = rows(batch)
        X, Y = self._Xval[b], self._Yval[b]
        return (X.T @ (_softmax(X @ self._W(w)) - Y)).ravel() / X.shape[0]

    def hess_vec(self, x, w, v):
        X = self._Xtr
        P = _softmax(X @ self._W(w))
        Z = X @ self._W(v)
        S = P * Z - P * np.sum(P * Z, axis=1, keepdims=True)
        return (X.T @ S).ravel() / X.shape[0] + np.exp(x) * v

    def cross_vec(self, x, w, v):
        return np.exp(x) * w * v

    def initial_x(self, seed):
        return np.zeros(self.p)

    def default_alpha(self):
        return 0.5
