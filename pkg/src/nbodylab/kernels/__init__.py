"""Hot pairwise kernels with a compiled core and a pure-numpy fallback.

The compiled extension (Cython) is preferred; set the environment variable
``NBODYLAB_PURE_KERNELS=1`` before import to force the numpy fallback.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

if os.environ.get("NBODYLAB_PURE_KERNELS") == "1":
    from . import _pure as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pure as _impl

BACKEND = _impl.BACKEND
min_pair_distance = _impl.min_pair_distance
path_potentials = _impl.path_potentials
path_potential_gradients = _impl.path_potential_gradients

__all__ = [
    "BACKEND",
    "min_pair_distance",
    "path_potentials",
    "path_potential_gradients",
]
