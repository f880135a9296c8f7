"""Hot grid kernels with a compiled core and a pure-Python fallback.

The compiled extension is preferred. Set ``SEMLOC_PURE_PYTHON=1`` to force
the fallback, e.g. to compare backends.
"""
import contextlib
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("SEMLOC_PURE_PYTHON"):
    try:
        from . import _core as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _fallback


def backends():
    """Available kernel implementations keyed by name."""
    out = {"python": _fallback}
    try:
        from . import _core

        out["cython"] = _core
    except ImportError:  # pragma: no cover
        pass
    return out


@contextlib.contextmanager
def use_backend(name):
    """Temporarily route the module-level kernels through backend ``name``."""
    global _impl, BACKEND
    table = backends()
    if name not in table:
        raise ValueError(f"backend {name!r} is not available (have {sorted(table)})")
    saved = _impl, BACKEND
    _impl, BACKEND = table[name], name
    try:
        yield
    finally:
        _impl, BACKEND = saved


def edt_sq(source, impl=None):
    impl = impl or _impl
    src = np.ascontiguousarray(source, dtype=np.uint8)
    return impl.edt_sq(src)


def raycast_many(occupied, px, py, dirx, diry, max_t, impl=None):
    impl = impl or _impl
    return impl.raycast_many(
        np.ascontiguousarray(occupied, dtype=np.uint8),
        np.ascontiguousarray(px, dtype=np.float64),
        np.ascontiguousarray(py, dtype=np.float64),
        np.ascontiguousarray(dirx, dtype=np.float64),
        np.ascontiguousarray(diry, dtype=np.float64),
        float(max_t),
    )
