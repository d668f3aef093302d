"""Convolution kernels with two interchangeable backends.

The jit-compiled loops are the default; set ``MSCA_KERNELS=numpy`` to
force the pure-numpy (im2col) path, or ``MSCA_KERNELS=numba`` to require
the compiled one.  Both produce float64 results that agree to roundoff;
``msca bench`` times them against each other.
"""

import os
import warnings

ENV_VAR = "MSCA_KERNELS"


def load_backend(name):
    """Import one backend by name ('numba' or 'numpy')."""
    if name == "numpy":
        from . import _numpy_impl

        return _numpy_impl
    if name == "numba":
        from . import _numba_impl

        return _numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    choice = os.environ.get(ENV_VAR, "auto").lower()
    if choice in ("numba", "auto"):
        try:
            return load_backend("numba"), "numba"
        except ImportError:
            if choice == "numba":
                raise
            warnings.warn("numba unavailable, falling back to numpy kernels")
    elif choice != "numpy":
        raise ValueError(f"{ENV_VAR}={choice!r}: expected numba, numpy or auto")
    return load_backend("numpy"), "numpy"


_impl, _active = _select()

conv2d_forward = _impl.conv2d_forward
conv2d_backward_x = _impl.conv2d_backward_x
conv2d_backward_w = _impl.conv2d_backward_w


def active_backend():
    return _active
