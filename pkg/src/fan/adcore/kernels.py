"""Select the hot-loop kernel backend at import.

The compiled Cython module is preferred; set ``FAN_PURE_PYTHON=1`` to force
the numpy fallback.  Both expose ``im2col``, ``col2im``, ``maxpool_forward``
and ``maxpool_backward`` with identical semantics.
"""

import os

from . import _pykernels

if os.environ.get("FAN_PURE_PYTHON", "") not in ("", "0"):
    backend = _pykernels
else:
    try:
        from . import _ckernels as backend
    except ImportError:  # extension not built
        backend = _pykernels

BACKEND = backend.NAME


def use(name: str) -> None:
    """Switch backend at runtime ("cython" or "numpy"); used by tests and the benchmark."""
    global backend, BACKEND
    if name == "numpy":
        backend = _pykernels
    elif name == "cython":
        from . import _ckernels
        backend = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = backend.NAME


def available() -> list[str]:
    names = ["numpy"]
    try:
        from . import _ckernels  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
