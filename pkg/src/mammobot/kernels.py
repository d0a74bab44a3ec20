"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``MAMMOBOT_PURE_PYTHON=1``
to force the pure-Python twin.
"""

import os

from . import _kernels_py

if os.environ.get("MAMMOBOT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

dh_origins = _impl.dh_origins
config_clearance = _impl.config_clearance
edge_clear = _impl.edge_clear
descend_loop = _impl.descend_loop
scan_loop = _impl.scan_loop
