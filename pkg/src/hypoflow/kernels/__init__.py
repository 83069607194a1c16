"""Backend dispatch for the hot numeric kernels.

The environment variable HYPOFLOW_BACKEND selects the implementation:

* ``auto``  (default) -- numba if importable, else pure numpy
* ``numba`` -- require the jitted kernels
* ``numpy`` -- force the pure-numpy fallback

Both backends expose the same functions with identical semantics; see
benchmarks/bench_kernels.py for a timing comparison.
"""

import os

from ..errors import ConfigError

_KERNEL_NAMES = [
    "transport_rhs",
    "fp_apply",
    "fp_adjoint_apply",
    "fp_cn_solve",
    "bgk_apply",
    "bgk_adjoint_apply",
    "bgk_relax",
    "fp_dissipation_terms",
]


def _load(name):
    if name == "numpy":
        from . import _numpy as impl
        return impl
    if name == "numba":
        from numba import config as _numba_config

        # serial kernels; workqueue avoids TBB version churn warnings
        _numba_config.THREADING_LAYER = "workqueue"
        from . import _numba as impl
        return impl
    raise ConfigError(f"unknown kernel backend {name!r}")


def get_impl(name):
    """Return the kernel module for an explicit backend name."""
    return _load(name)


_requested = os.environ.get("HYPOFLOW_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"HYPOFLOW_BACKEND must be auto, numba or numpy, got {_requested!r}"
    )

if _requested == "numpy":
    _impl = _load("numpy")
    BACKEND = "numpy"
else:
    try:
        _impl = _load("numba")
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = _load("numpy")
        BACKEND = "numpy"

transport_rhs = _impl.transport_rhs
fp_apply = _impl.fp_apply
fp_adjoint_apply = _impl.fp_adjoint_apply
fp_cn_solve = _impl.fp_cn_solve
bgk_apply = _impl.bgk_apply
bgk_adjoint_apply = _impl.bgk_adjoint_apply
bgk_relax = _impl.bgk_relax
fp_dissipation_terms = _impl.fp_dissipation_terms

__all__ = ["BACKEND", "get_impl"] + _KERNEL_NAMES
