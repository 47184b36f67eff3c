"""Kernel backend selection.

The hot loops (distance evaluation, brute-force scans, the greedy graph
search) exist twice: a compiled Cython module and a pure numpy/Python
fallback with identical semantics. The compiled one is picked at import
when present; set GRAPHANN_PURE=1 to force the fallback.

`impl` is looked up late by callers so tests can swap backends at runtime
via `use()`.
"""

from __future__ import annotations

import contextlib
import os

from . import _purepy

if os.environ.get("GRAPHANN_PURE"):
    impl = _purepy
    BACKEND = "python"
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        impl = _purepy
        BACKEND = "python"


def available() -> list[str]:
    names = ["python"]
    try:
        from . import _core  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


@contextlib.contextmanager
def use(name: str):
    """Temporarily switch the active backend ("compiled" or "python")."""
    global impl, BACKEND
    if name == "python":
        new = _purepy
    elif name == "compiled":
        from . import _core as new  # raises if not built
    else:
        raise ValueError(f"unknown backend {name!r}")
    old, old_name = impl, BACKEND
    impl, BACKEND = new, name
    try:
        yield
    finally:
        impl, BACKEND = old, old_name
