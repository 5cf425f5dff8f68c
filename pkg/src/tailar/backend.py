"""Kernel backend selection.

The package ships two implementations of the hot sampling kernels: a
compiled Cython extension (``tailar._ckernels``) and a pure NumPy fallback
(``tailar._pykernels``). The compiled one is preferred when importable.
Both produce bit-identical output for the same seed.

Selection can be forced with the ``TAILAR_BACKEND`` environment variable
(``c`` or ``python``) or at runtime with :func:`set_backend` /
:func:`use_backend`.
"""
from __future__ import annotations

import contextlib
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built; pure fallback
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["c"] = _ckernels


def _initial():
    name = os.environ.get("TAILAR_BACKEND", "").strip().lower()
    if name:
        if name not in _BACKENDS:
            raise ImportError(
                f"TAILAR_BACKEND={name!r} requested but not available; "
                f"choices: {sorted(_BACKENDS)}")
        return _BACKENDS[name]
    return _BACKENDS.get("c", _pykernels)


_active = _initial()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    """Name of the kernel backend currently in use."""
    return _active.BACKEND_NAME


def kernels():
    """The active kernel module."""
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch the kernel backend (mainly for tests/benchmarks)."""
    global _active
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        _active = previous
