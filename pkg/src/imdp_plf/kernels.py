"""Select the compiled kernels when available.

Set ``IMDP_PLF_PURE=1`` to force the numpy implementation.
"""
import os

if os.environ.get("IMDP_PLF_PURE"):
    from . import _kernels_py as _impl
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "numpy"

affine_max = _impl.affine_max
box_worst = _impl.box_worst

__all__ = ["affine_max", "box_worst", "BACKEND"]
