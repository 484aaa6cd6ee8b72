"""Numerical kernels: compiled extension when available, numpy otherwise.

``kernels`` forwards attribute access to the active backend, so callers bind
it once at import and :func:`use_backend` can still switch implementations
(the benchmark and the cross-backend tests rely on this).
"""

from __future__ import annotations

from penclust._core import _pure

try:
    from penclust._core import _fast
except ImportError:  # extension not built
    _fast = None

_BACKENDS = {"python": _pure}
if _fast is not None:
    _BACKENDS["cython"] = _fast

_active = _fast if _fast is not None else _pure


class _Dispatch:
    def __getattr__(self, name):
        return getattr(_active, name)


kernels = _Dispatch()


def backend() -> str:
    return "cython" if _active is _fast and _fast is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def use_backend(name: str) -> str:
    """Activate ``"cython"`` or ``"python"``; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    previous = backend()
    _active = _BACKENDS[name]
    return previous
