"""Session-kernel backend selection.

The compiled Cython backend is used when the extension built; otherwise the
pure-numpy reference backend.  ``BEAMALIGN_BACKEND=python|compiled`` in the
environment forces a choice, and tests switch explicitly via
:func:`set_backend`.
"""

from __future__ import annotations

import os

from . import _ref

_BACKENDS = {"python": _ref}

try:
    from . import _fast
    _BACKENDS["compiled"] = _fast
except ImportError:
    _fast = None

_requested = os.environ.get("BEAMALIGN_BACKEND", "").strip().lower()
if _requested:
    if _requested not in _BACKENDS:
        raise ImportError(
            f"BEAMALIGN_BACKEND={_requested!r} not available; "
            f"choices: {sorted(_BACKENDS)}")
    _active = _requested
else:
    _active = "compiled" if "compiled" in _BACKENDS else "python"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def backend_name() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}")
    _active = name


def get_backend(name: str | None = None):
    """Return the active backend module (or a specific one by name)."""
    return _BACKENDS[name if name is not None else _active]
