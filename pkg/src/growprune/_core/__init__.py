"""Kernel backend selection.

Two interchangeable backends implement the hot numeric kernels: a compiled
Cython extension (``_ckernels``) and a pure-numpy fallback (``py_kernels``).
The active one is chosen at import time:

* ``GROWPRUNE_KERNELS=python`` forces the fallback,
* ``GROWPRUNE_KERNELS=cython`` requires the extension (ImportError if absent),
* unset/``auto`` prefers the extension and silently falls back.

The compiled kernels are float64-only; float32 work is routed to the numpy
fallback so the optional 32-bit mode keeps working either way.
"""

import os

import numpy as np

from . import py_kernels

_EMPTY_MASK = np.empty(0, dtype=np.uint8)


def _load_compiled():
    from . import _ckernels  # noqa: PLC0415 — optional compiled extension

    return _ckernels


def _select():
    choice = os.environ.get("GROWPRUNE_KERNELS", "auto").lower()
    if choice == "python":
        return py_kernels
    if choice == "cython":
        return _load_compiled()
    if choice != "auto":
        raise ValueError(f"GROWPRUNE_KERNELS must be auto|cython|python, got {choice!r}")
    try:
        return _load_compiled()
    except ImportError:
        return py_kernels


_impl = _select()

BACKEND = _impl.NAME


def available_backends():
    names = ["python"]
    try:
        _load_compiled()
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the raw kernel module for `name` ('python' or 'cython')."""
    if name == "python":
        return py_kernels
    if name == "cython":
        return _load_compiled()
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Rebind the active backend; returns the previous name. Used by the
    benchmark to time identical code paths under both implementations."""
    global _impl, BACKEND
    previous = BACKEND
    _impl = get_backend(name)
    BACKEND = _impl.NAME
    return previous


def _compiled_ok(*arrays):
    return _impl is not py_kernels and all(a.dtype == np.float64 for a in arrays)


def affine(x, w, b):
    if _compiled_ok(x, w, b):
        return _impl.affine(
            np.ascontiguousarray(x), np.ascontiguousarray(w), np.ascontiguousarray(b)
        )
    return py_kernels.affine(x, w, b)


def affine_backward(gy, x, w):
    if _compiled_ok(gy, x, w):
        return _impl.affine_backward(
            np.ascontiguousarray(gy), np.ascontiguousarray(x), np.ascontiguousarray(w)
        )
    return py_kernels.affine_backward(gy, x, w)


def momentum_update(value, velocity, grad, mask, lr, momentum):
    if _compiled_ok(value, velocity, grad):
        flat_mask = _EMPTY_MASK if mask is None else mask.reshape(-1)
        _impl.momentum_update(
            value.reshape(-1), velocity.reshape(-1), np.ascontiguousarray(grad).reshape(-1),
            flat_mask, float(lr), float(momentum),
        )
        return
    py_kernels.momentum_update(value, velocity, grad, mask, lr, momentum)
