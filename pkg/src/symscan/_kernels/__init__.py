"""Kernel backend selection.

The compiled extension is used when available; set SYMSCAN_KERNELS=python to
force the numpy fallback (e.g. for benchmarking) or SYMSCAN_KERNELS=c to make
a missing extension an error. Results are deterministic within a backend but
may differ between backends in the last bits (different summation orders).
"""

import os

_requested = os.environ.get("SYMSCAN_KERNELS", "auto")
if _requested not in {"auto", "c", "python"}:
    raise RuntimeError(f"SYMSCAN_KERNELS must be auto, c or python, got {_requested!r}")

if _requested == "python":
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        from . import _pykernels as _impl

        BACKEND = "python"

chamfer = _impl.chamfer
register = _impl.register

__all__ = ["BACKEND", "chamfer", "register"]
