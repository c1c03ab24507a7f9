"""Plain-text dataset dumps.

Layout (all lines starting with ``#`` are headers)::

    # pzobo-dataset v1
    # type=hr seed=1 kind=linear hidden=32 d=30 gamma=0.1 noise_sd=0.1
    # array X1 100 50
    <100 comma-separated rows of 50 values, row-major, %.17g>
    # array Y1 100 1
    ...

Vectors are stored as single-column matrices. ``%.17g`` round-trips
float64 exactly.
"""

import io

import numpy as np

from .hyperrep import HRDataset
from .logistic import HODataset

_MAGIC = "# pzobo-dataset v1"
_HR_ARRAYS = ("X1", "Y1", "X2", "Y2", "true_lambda", "true_w")
_HO_ARRAYS = ("X_train", "y_train", "X_val", "y_val", "true_W")


def _write_array(fh, name, arr):
    arr = np.asarray(arr, dtype=float)
    mat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr[:, None]
    fh.write(f"# array {name} {mat.shape[0]} {mat.shape[1]}\n")
    np.savetxt(fh, mat, fmt="%.17g", delimiter=",")


def save_dataset(data, path):
    if isinstance(data, HRDataset):
        meta = dict(type="hr", seed=data.seed, kind=data.kind, hidden=data.hidden, d=data.d,
                    gamma=repr(data.gamma), noise_sd=repr(data.noise_sd))
        names = _HR_ARRAYS
    elif isinstance(data, HODataset):
        meta = dict(type="ho", seed=data.seed, classes=data.classes)
        names = _HO_ARRAYS
    else:
        raise TypeError(f"cannot serialize {type(data).__name__}")
    try:
        with open(path, "w") as fh:
            fh.write(_MAGIC + "\n")
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            for name in names:
                _write_array(fh, name, getattr(data, name))
    except OSError as exc:
        raise OSError(f"could not write dataset to {path}: {exc}") from exc


def load_dataset(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a pzobo dataset dump")
    meta = dict(item.split("=", 1) for item in lines[1][2:].split())
    arrays, i = {}, 2
    while i < len(lines):
        _, _, name, r, c = lines[i].split()
        r, c = int(r), int(c)
        block = "\n".join(lines[i + 1:i + 1 + r])
        arrays[name] = np.loadtxt(io.StringIO(block), delimiter=",", ndmin=2).reshape(r, c)
        i += 1 + r
    vec = lambda a: a[:, 0]  # noqa: E731
    if meta["type"] == "hr":
        return HRDataset(X1=arrays["X1"], Y1=vec(arrays["Y1"]), X2=arrays["X2"],
                         Y2=vec(arrays["Y2"]), gamma=float(meta["gamma"]), kind=meta["kind"],
                         hidden=int(meta["hidden"]), d=int(meta["d"]), seed=int(meta["seed"]),
                         noise_sd=float(meta["noise_sd"]),
                         true_lambda=vec(arrays["true_lambda"]), true_w=vec(arrays["true_w"]))
    classes = int(meta["classes"])
    return HODataset(X_train=arrays["X_train"], y_train=vec(arrays["y_train"]).astype(int),
                     X_val=arrays["X_val"], y_val=vec(arrays["y_val"]).astype(int),
                     classes=classes, seed=int(meta["seed"]), true_W=arrays["true_W"])
