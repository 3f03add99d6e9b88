"""Kernel backend selection.

The compiled extension is used when importable; set ``SCANID_FORCE_NUMPY=1``
to force the pure-numpy fallback. Both backends implement the same
contracts (see numpy_backend docstrings).
"""

import os

from . import numpy_backend

if os.environ.get("SCANID_FORCE_NUMPY") == "1":
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _fast as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward


def get_backend(name):
    """Return a backend module by name ('numpy' or 'cython')."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _fast
        return _fast
    raise ValueError(f"unknown kernel backend: {name}")
