"""Round-loop backend selection.

The compiled extension ``blindcal._kernel`` is used when it was built;
otherwise, or when ``BLINDCAL_KERNEL=python`` is set, the numpy version in
``blindcal._kernel_py`` runs instead.  Both take identical arguments and
perform the same floating-point operations in the same order.
"""
import logging
import os

from blindcal import _kernel_py

log = logging.getLogger(__name__)

advance_python = _kernel_py.advance

try:
    from blindcal._kernel import advance as advance_compiled
except ImportError:  # extension not built
    advance_compiled = None

if advance_compiled is not None and os.environ.get("BLINDCAL_KERNEL", "").lower() != "python":
    advance = advance_compiled
    BACKEND = "cython"
else:
    advance = advance_python
    BACKEND = "python"
    log.debug("using pure-Python round loop")


def get_advance(backend=None):
    """Kernel function for ``backend`` (``"cython"``, ``"python"`` or ``None`` for the default)."""
    if backend is None:
        return advance
    if backend == "python":
        return advance_python
    if backend == "cython":
        if advance_compiled is None:
            raise RuntimeError("compiled kernel is not available; build the package with Cython")
        return advance_compiled
    raise ValueError(f"unknown kernel backend {backend!r}")
