"""Kernel backend selection.

At import time the compiled Cython extension is preferred; the NumPy
implementation is the fallback. Set PFNAV_PURE_PYTHON=1 to force the
fallback. ``rbf_eval`` dispatches on batch size: the compiled loop wins on
the small per-step batches inside the closed-loop integrator, while the
BLAS-backed NumPy version wins on large quadrature batches.
"""

import os

import numpy as np

from . import _kernels_py as _py

if os.environ.get("PFNAV_PURE_PYTHON"):
    _impl = _py
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _py

# crossover measured in benchmarks/bench_kernels.py
_RBF_BATCH_CUTOVER = 256


def backend_name():
    return _impl.BACKEND


def has_compiled_backend():
    return _impl.BACKEND == "compiled"


def rbf_eval(points, centers, sigma):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if _impl is not _py and points.shape[0] <= _RBF_BATCH_CUTOVER:
        return _impl.rbf_eval(points, centers, sigma)
    return _py.rbf_eval(points, centers, sigma)


def project_rows_simplex(mat):
    return _impl.project_rows_simplex(np.atleast_2d(np.asarray(mat, dtype=np.float64)))


def simulate_closed_loop(*args, **kwargs):
    return _impl.simulate_closed_loop(*args, **kwargs)
