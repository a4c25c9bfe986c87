"""Kernel backend selection.

The numba backend is the default; set GRIDSPN_NUMBA=0 (or "false"/"off")
to force the pure-numpy fallback, e.g. for debugging or machines without a
working JIT.  Both backends implement the same function set and the same
numeric contracts; tests run the numpy backend against the numba one.
"""

import os

from . import _kernels_numpy

_DISABLE_VALUES = ("0", "false", "off", "no")


def _pick():
    flag = os.environ.get("GRIDSPN_NUMBA", "1").strip().lower()
    if flag in _DISABLE_VALUES:
        return _kernels_numpy
    try:
        from . import _kernels_numba
        return _kernels_numba
    except ImportError:
        return _kernels_numpy


_impl = _pick()

NAME = _impl.NAME
gclp_out_hw = _impl.gclp_out_hw
gclp_forward = _impl.gclp_forward
gclp_backward_logderiv = _impl.gclp_backward_logderiv
gclp_backward_grad = _impl.gclp_backward_grad
gclp_select = _impl.gclp_select
sum_forward = _impl.sum_forward
sum_forward_max = _impl.sum_forward_max
sum_backward_logderiv = _impl.sum_backward_logderiv
sum_backward_grad = _impl.sum_backward_grad
sum_select = _impl.sum_select


def set_num_threads(n: int):
    """Cap worker threads for the numba backend (no-op on numpy)."""
    if NAME == "numba":
        import numba
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
