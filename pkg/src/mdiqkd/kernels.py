"""Kernel selection: compiled extension if built, numpy fallback otherwise."""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; fallback only
    _compiled = None

_IMPLS = {"python": _kernels_py.bsm_probabilities}
if _compiled is not None:
    _IMPLS["cython"] = _compiled.bsm_probabilities

BACKEND = "cython" if _compiled is not None else "python"
_active = _IMPLS[BACKEND]


def available_backends() -> list[str]:
    return sorted(_IMPLS)


def use_backend(name: str) -> None:
    """Switch the kernel implementation process-wide ("python" or "cython")."""
    global BACKEND, _active
    if name not in _IMPLS:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}")
    BACKEND = name
    _active = _IMPLS[name]


def bsm_probabilities(a, b, overlap: float, q: float):
    return _active(a, b, overlap, q)


__all__ = ["BACKEND", "available_backends", "bsm_probabilities", "use_backend"]
