"""Inner-loop GD and shared-path SGD.

Both solvers accept a single outer point ``x`` of shape ``(p,)`` or a
stack of ``k`` points of shape ``(k, p)``. A stack advances in lockstep,
every member consuming the same minibatch at every step, which is exactly
what the trajectory-difference estimators need.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import InnerDivergence

DIVERGENCE_NORM = 1e12


@dataclass
class BatchPath:
    batches: list
    m: int
    S: int

    def __len__(self):
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)


@dataclass
class InnerRun:
    y: np.ndarray
    residual: np.ndarray | float
    grad_calls: int
    trajectory: np.ndarray | None = field(default=None, repr=False)


def make_batch_path(seed, N, m, S, *, key=()):
    """N sorted index sets of size S, sampled without replacement within a batch.

    ``key`` extends the substream address, e.g. with the outer iteration.
    """
    if not 1 <= S <= m:
        raise ValueError(f"batch size S={S} must satisfy 1 <= S <= m={m}")
    if N < 0:
        raise ValueError("N must be >= 0")
    if S == m:
        full = np.arange(m)
        return BatchPath([full] * N, m, S)
    rng = _rng.substream(seed, _rng.BATCH_PATH, *key)
    batches = [np.sort(rng.choice(m, size=S, replace=False)) for _ in range(N)]
    return BatchPath(batches, m, S)


def _run(problem, x, y0, alpha, batches, keep_trajectory):
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y0, dtype=float), x.shape[:-1] + (problem.d,)).copy()
    traj = [y.copy()] if keep_trajectory else None
    for t, batch in enumerate(batches, start=1):
        y = y - alpha * problem.inner_grad_y(x, y, batch)
        norm = np.max(np.linalg.norm(y, axis=-1))
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise InnerDivergence(t, norm)
        if keep_trajectory:
            traj.append(y.copy())
    residual = np.linalg.norm(problem.inner_grad_y(x, y), axis=-1)
    return InnerRun(
        y=y,
        residual=residual if residual.ndim else float(residual),
        grad_calls=len(batches) * (1 if x.ndim == 1 else x.shape[0]),
        trajectory=np.stack(traj) if keep_trajectory else None,
    )


def gd_inner(problem, x, y0, alpha, N, keep_trajectory=False):
    """N full-gradient steps y <- y - alpha * grad_y g(x, y)."""
    if N < 0:
        raise ValueError("N must be >= 0")
    return _run(problem, x, y0, alpha, [None] * N, keep_trajectory)


def sgd_inner(problem, x, y0, alpha, path: BatchPath, keep_trajectory=False):
    """One minibatch step per entry of ``path``."""
    if path.m != problem.m:
        raise ValueError(f"batch path built for m={path.m}, problem has m={problem.m}")
    return _run(problem, x, y0, alpha, path.batches, keep_trajectory)
