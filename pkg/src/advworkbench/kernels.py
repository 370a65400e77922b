"""Dispatch for the hot kernels.

The compiled ``_native`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` is used. ``use_backend`` switches
explicitly (tests and the benchmark exercise both).
"""
import logging

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _native
except ImportError:  # extension not built
    _native = None

_BACKENDS = {"python": _pykernels}
if _native is not None:
    _BACKENDS["cython"] = _native

_active = _native if _native is not None else _pykernels
BACKEND = "cython" if _native is not None else "python"


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previously active name."""
    global _active, BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    previous = BACKEND
    _active = _BACKENDS[name]
    BACKEND = name
    logger.debug("kernel backend -> %s", name)
    return previous


def conv2d_forward(x, w, b, stride):
    return _active.conv2d_forward(x, w, b, stride)


def conv2d_backward(gout, x, w, stride):
    return _active.conv2d_backward(gout, x, w, stride)


def xorshift_block(state, n):
    return _active.xorshift_block(state, n)
