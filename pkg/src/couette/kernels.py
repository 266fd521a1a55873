"""Hot-kernel dispatch: compiled Cython kernels when built, numpy fallback otherwise.

Set ``COUETTE_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
the backend-agreement tests).
"""
import os

from . import _kernels_py

if os.environ.get("COUETTE_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

shear_factor = _impl.shear_factor
oracle_rk4 = _impl.oracle_rk4
packed_dot = _impl.packed_dot
schur_sums = _impl.schur_sums


def backends():
    """Map of every importable backend name to its module."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
