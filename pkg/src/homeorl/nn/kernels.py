"""Picks the compiled kernels when available, numpy otherwise.

Set ``HOMEORL_PURE_PYTHON=1`` to force the numpy path.
"""

import os

from homeorl.nn import _kernels_py

BACKEND = "python"
if os.environ.get("HOMEORL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from homeorl.nn import _kernels_ext as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
gae = _impl.gae

__all__ = ["BACKEND", "gae", "lstm_backward", "lstm_forward"]
