"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Setting ``NSFDECAY_BACKEND=python`` forces the fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("NSFDECAY_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def expm3(a, backend=None):
    """Batched exponential of 3x3 real matrices of shape (..., 3, 3)."""
    impl = _select(backend)
    a = np.ascontiguousarray(a, dtype=np.float64)
    shape = a.shape
    out = impl.expm3(a.reshape(-1, 3, 3))
    return np.asarray(out).reshape(shape)


def propagate(u, xhat, index, mats, heat, backend=None):
    """Apply per-mode 3x3 propagators and heat factors to a stacked state, in place."""
    impl = _select(backend)
    return impl.propagate(u, np.ascontiguousarray(xhat), np.ascontiguousarray(index, dtype=np.intp),
                          np.ascontiguousarray(mats), np.ascontiguousarray(heat))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")
