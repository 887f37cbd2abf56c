"""Kernel backend selection.

The compiled extension is used when it imports; set ``MDIQSS_BACKEND=python``
to force the numpy fallback (or ``compiled`` to fail loudly without it).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None) -> ModuleType:
    if name is None:
        name = BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise RuntimeError(f"kernel backend {name!r} unavailable; have {available()}") from None


def _select() -> str:
    wanted = os.environ.get("MDIQSS_BACKEND", "").strip().lower()
    if wanted in ("", "auto"):
        return "compiled" if "compiled" in _BACKENDS else "python"
    if wanted not in ("python", "compiled"):
        raise RuntimeError(f"MDIQSS_BACKEND must be 'python', 'compiled' or 'auto', got {wanted!r}")
    get(wanted)
    return wanted


BACKEND = _select()
