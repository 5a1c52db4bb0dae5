"""Kernel backend selection.

The compiled extension is used when importable; set ``PIC_SHUFFLE_BACKEND=python``
to force the numpy fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _fallback


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if os.environ.get("PIC_SHUFFLE_BACKEND", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
    _impl: ModuleType = _fallback
else:
    BACKEND = "cython"
    _impl = _compiled


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


linear_assignment = _impl.linear_assignment
hopcroft_karp = _impl.hopcroft_karp
grid_radius_pairs = _impl.grid_radius_pairs
