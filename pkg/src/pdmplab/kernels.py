"""Kernel backend selection.

Imports the compiled extension when available, else the numpy fallback. The
environment variable ``PDMPLAB_BACKEND`` forces a choice (``cython`` or
``python``); forcing ``cython`` when the extension is missing is an error.
Both backends implement the same fixed accumulation order, so a given
(config, seed) run produces bit-identical results under either.
"""

import os

from . import _core_py
from .errors import InputError

_forced = os.environ.get("PDMPLAB_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _core_py
elif _forced == "cython":
    from . import _core as _impl  # noqa: F401  (raises if not built)
elif _forced == "":
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _core_py
else:
    raise InputError(f"unknown PDMPLAB_BACKEND {_forced!r}; use 'cython' or 'python'")

affine_forward = _impl.affine_forward
affine_backward = _impl.affine_backward
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward


def backend_name() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return _impl.BACKEND_NAME


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _core  # noqa: F401
    except ImportError:
        pass
    else:
        names.append("cython")
    return names
