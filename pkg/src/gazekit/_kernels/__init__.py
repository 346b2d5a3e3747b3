"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
fallback is always available. Set ``GAZEKIT_KERNELS=python`` or
``GAZEKIT_KERNELS=native`` to force a backend (the latter raises if the
extension is missing).
"""

import importlib
import os

from . import _numpy_backend

_forced = os.environ.get("GAZEKIT_KERNELS", "").strip().lower()

_native = None
if _forced != "python":
    try:
        _native = importlib.import_module("._native", __name__)
    except ImportError:
        _native = None
        if _forced == "native":
            raise ImportError(
                "GAZEKIT_KERNELS=native but the compiled kernel extension is not "
                "built; run `pip install -e . --no-build-isolation` or unset the variable"
            )

_impl = _native if _native is not None else _numpy_backend

BACKEND_NAME = _impl.BACKEND_NAME
PLANE_FRONT = _impl.PLANE_FRONT
PLANE_TOP = _impl.PLANE_TOP
PLANE_SIDE = _impl.PLANE_SIDE

warp_bilinear = _impl.warp_bilinear
poisson_matvec = _impl.poisson_matvec
mc_unproject_errors = _impl.mc_unproject_errors


def available_backends():
    backends = {"python": _numpy_backend}
    if _native is not None:
        backends["native"] = _native
    return backends
