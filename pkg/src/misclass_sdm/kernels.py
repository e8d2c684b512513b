"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when the environment variable ``MISCLASS_SDM_PURE_PYTHON`` is set
to a non-empty value.
"""

import os

from . import _kernels_py

BACKEND = "python"

if not os.environ.get("MISCLASS_SDM_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
else:
    _compiled = None

if _compiled is not None:
    block_loglik = _compiled.block_loglik
    delta_loglik = _compiled.delta_loglik
    commit = _compiled.commit
    BACKEND = "cython"
else:
    block_loglik = _kernels_py.block_loglik
    delta_loglik = _kernels_py.delta_loglik
    commit = _kernels_py.commit


def get_backend(name=None):
    """Return a namespace with the three kernels for ``name``.

    ``name`` is ``"cython"``, ``"python"`` or ``None`` for the active one.
    Raises ImportError when the compiled backend is requested but unavailable.
    """
    if name is None:
        name = BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
