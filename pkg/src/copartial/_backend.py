"""Replicate-kernel selection: compiled extension when built, NumPy otherwise.

The environment variable ``COPARTIAL_BACKEND`` (``cython`` or ``numpy``)
overrides the default resolution of ``"auto"``.
"""

from __future__ import annotations

import os

from . import _kernels
from .errors import CopartialError

try:
    from . import _speedups
except ImportError:  # extension not built; pure fallback
    _speedups = None

__all__ = ["available_backends", "resolve_backend"]

_BACKENDS = {"numpy": _kernels}
if _speedups is not None:
    _BACKENDS["cython"] = _speedups


def available_backends():
    """Backend names in preference order."""
    names = ["numpy"]
    if "cython" in _BACKENDS:
        names.insert(0, "cython")
    return names


def resolve_backend(name="auto"):
    """Resolve a backend name to ``(name, module)``.

    ``"auto"`` prefers the compiled kernel, honoring ``COPARTIAL_BACKEND``
    when set.
    """
    if name in (None, "auto"):
        name = os.environ.get("COPARTIAL_BACKEND", "auto")
    if name in (None, "auto"):
        name = available_backends()[0]
    if name not in _BACKENDS:
        raise CopartialError(
            f"backend {name!r} not available; choose from "
            f"{available_backends()}"
        )
    return name, _BACKENDS[name]
