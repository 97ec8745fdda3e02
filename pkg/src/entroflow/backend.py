"""Select the numerical kernel backend at import time.

The compiled extension is preferred when it imports cleanly; set
``ENTROFLOW_BACKEND=python`` (or ``cython``) to force a choice.  Outputs are
deterministic per backend; the active backend name is recorded in run
manifests.
"""

import os

_requested = os.environ.get("ENTROFLOW_BACKEND", "auto").lower()

if _requested in ("auto", "cython"):
    try:
        from entroflow import _core as kernels

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from entroflow import _core_py as kernels

        BACKEND = "python"
elif _requested == "python":
    from entroflow import _core_py as kernels

    BACKEND = "python"
else:
    raise ValueError(f"unknown ENTROFLOW_BACKEND={_requested!r}")


def get_backend() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return BACKEND
