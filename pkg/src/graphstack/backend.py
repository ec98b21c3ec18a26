"""Kernel backend selection.

The compiled extension (``graphstack._core``) is preferred when it
imported cleanly; otherwise the NumPy fallback in ``_ref`` is used.
Setting ``GRAPHSTACK_PURE_PYTHON=1`` forces the fallback, which is how
the benchmark compares the two implementations.
"""

import os

from graphstack import _ref

try:
    from graphstack import _core
except ImportError:  # extension not built
    _core = None


def _select():
    if os.environ.get("GRAPHSTACK_PURE_PYTHON", "") not in ("", "0"):
        return _ref, "python"
    if _core is not None:
        return _core, "compiled"
    return _ref, "python"


_impl, _name = _select()

csr_matmat = _impl.csr_matmat
split_scan = _impl.split_scan


def backend_name():
    """Active kernel backend: ``"compiled"`` or ``"python"``."""
    return _name


def available_backends():
    """Mapping of backend name to its kernel module, for benchmarks/tests."""
    out = {"python": _ref}
    if _core is not None:
        out["compiled"] = _core
    return out
