"""Backend selection for the hot kernels.

The compiled extension (:mod:`mitoseg._core`) is used when it imported
successfully; otherwise the pure-NumPy fallback takes over.  Set
``MITOSEG_PURE=1`` to force the fallback.  Both backends expose the same
functions with bit-identical outputs; ``benchmarks/bench_backends.py``
compares their throughput.
"""

import os

from . import fallback

try:
    from .. import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("MITOSEG_PURE", "0") != "1":
    _active = _compiled
else:
    _active = fallback

seed_map_into = _active.seed_map_into
label_chunk = _active.label_chunk
relabel_into = _active.relabel_into
apply_kernels_into = _active.apply_kernels_into


def backend_name() -> str:
    return _active.BACKEND


def compiled_available() -> bool:
    return _compiled is not None
