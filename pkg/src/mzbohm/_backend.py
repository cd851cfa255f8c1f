"""Kernel backend selection: compiled extension if available, else pure Python.

Set MZBOHM_BACKEND=python (or =compiled) to force a choice; the default is the
compiled extension when it imports cleanly.
"""

from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("MZBOHM_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _kernels_py
    COMPILED = False
elif _forced == "compiled":
    from . import _kernels as kernels  # noqa: F401  (raises if not built)

    COMPILED = True
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        kernels = _kernels_py
        COMPILED = False


def backend_name() -> str:
    return "compiled" if COMPILED else "python"


def get_kernels(name: str | None = None):
    """Kernel module by name ('compiled', 'python' or None for the default)."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
