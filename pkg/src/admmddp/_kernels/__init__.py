"""Kernel backend selection.

The compiled extension is preferred; the pure-numpy fallback keeps the
package fully functional without a C toolchain. ``ADMMDDP_FORCE_PYTHON=1``
forces the fallback (used by the backend benchmark and CI checks).
"""
import os

if os.environ.get("ADMMDDP_FORCE_PYTHON") == "1":
    from . import pyfallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import pyfallback as _impl

        BACKEND = "python"

ilqr_backward = _impl.ilqr_backward
diag_qp = _impl.diag_qp

__all__ = ["ilqr_backward", "diag_qp", "BACKEND"]
