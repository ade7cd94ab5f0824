"""Choose between the compiled ULA kernel and the numpy fallback.

The compiled kernel is used when the extension imports and
``MIXLANGEVIN_PURE_PYTHON`` is unset.
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

try:
    from . import _ula_core as _compiled
except ImportError:  # extension not built
    _compiled = None

FORCE_PURE = os.environ.get("MIXLANGEVIN_PURE_PYTHON", "").strip() not in ("", "0")

if _compiled is None:
    log.debug("compiled ULA kernel unavailable; using numpy fallback")


def compiled_available() -> bool:
    return _compiled is not None


def default_backend() -> str:
    return "compiled" if (_compiled is not None and not FORCE_PURE) else "python"


def resolve(backend=None) -> str:
    backend = backend or default_backend()
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and _compiled is None:
        raise ImportError("compiled ULA kernel is not built; reinstall with Cython available")
    return backend


def compiled_kernel():
    return _compiled.ula_block


fallback_kernel = _fallback.ula_block
kind_grad = _fallback._kind_grad
