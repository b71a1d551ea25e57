"""Kernel backend selection.

The hot kernels (adjacent-site swaps, gate application, center shifts, the
RK4 master-equation integrator) exist twice: a numba-compiled version and a
pure-numpy fallback.  The environment variable ``TIMEBIN_MPS_BACKEND`` picks
one at import time (``numba`` or ``numpy``); the default is numba when it
imports cleanly.  ``benchmarks/bench_backends.py`` times the two against each
other.
"""

import os

from . import numpy_backend

_ENV_VAR = "TIMEBIN_MPS_BACKEND"
_active = None


def _load(name):
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend

        return numba_backend
    raise ValueError(f"unknown kernel backend {name!r} (expected 'numba' or 'numpy')")


def active():
    """The kernel module in use for this process."""
    global _active
    if _active is None:
        requested = os.environ.get(_ENV_VAR, "").strip().lower()
        if requested:
            _active = _load(requested)
        else:
            try:
                _active = _load("numba")
            except ImportError:
                _active = numpy_backend
    return _active


def backend_name():
    return active().NAME
