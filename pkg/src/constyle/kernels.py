"""Hot-kernel dispatch.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementations in ``_pykernels`` take over. Set
``CONSTYLE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("CONSTYLE_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

convolve2d_reflect = _impl.convolve2d_reflect
im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "convolve2d_reflect", "im2col", "col2im"]
