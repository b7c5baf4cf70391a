"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is used.  Set ``DBUOFDM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("DBUOFDM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass

householder_chain = _impl.householder_chain
fixed_merged_stages = _impl.fixed_merged_stages
rshift_rne = _kernels_py.rshift_rne
saturate = _kernels_py.saturate
