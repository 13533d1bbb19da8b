"""Backend selection for the hot conv1d kernels.

The compiled Cython extension is preferred when it is importable; the
pure-numpy reference backend is used otherwise. Set DBCONF_PURE_PYTHON=1
to force the fallback (used by the benchmark and by tests that compare
the two backends).
"""

import os

from . import _reference

if os.environ.get("DBCONF_PURE_PYTHON") == "1":
    _impl = _reference
    BACKEND = "python"
else:
    try:
        from . import _convkern as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _reference
        BACKEND = "python"


def conv1d_forward(xp, w, stride, groups):
    return _impl.conv1d_forward(xp, w, stride, groups)


def conv1d_backward_x(gy, w, stride, groups, padded_len):
    return _impl.conv1d_backward_x(gy, w, stride, groups, padded_len)


def conv1d_backward_w(gy, xp, stride, groups, kernel_size):
    return _impl.conv1d_backward_w(gy, xp, stride, groups, kernel_size)


def get_backends():
    """(name, module) pairs for every importable backend."""
    out = [("python", _reference)]
    try:
        from . import _convkern
        out.append(("cython", _convkern))
    except ImportError:
        pass
    return out
