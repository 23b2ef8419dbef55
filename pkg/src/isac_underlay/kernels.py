"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when the
extension was not built or when ``ISAC_PURE_PYTHON`` is set to a truthy value.
The correlation scan always runs on the numpy path: its Doppler step is a
dense matrix product, which BLAS does faster than the compiled loop (see
``benchmarks/bench_kernels.py``). The compiled version is kept for parity tests.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("ISAC_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

lfsr_bits = _impl.lfsr_bits
apply_paths = _impl.apply_paths
correlation_map = _kernels_py.correlation_map

__all__ = ["BACKEND", "lfsr_bits", "apply_paths", "correlation_map"]
