"""Select the compiled kernels when available, else the numpy fallback.

Set ``CCT_DISABLE_EXTENSION=1`` to force the pure-numpy path.  The active
choice is exposed as :data:`BACKEND` and re-exported from the package root.
"""
from __future__ import annotations

import os

from . import _numpy_core

if os.environ.get("CCT_DISABLE_EXTENSION", "0") == "1":
    _impl = _numpy_core
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _numpy_core

BACKEND: str = _impl.BACKEND_NAME
aux_rhat_sizes = _impl.aux_rhat_sizes
u_stat_terms = _impl.u_stat_terms
