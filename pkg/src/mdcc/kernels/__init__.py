"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``MDCC_DISABLE_NUMBA=1`` before import to force the numpy path (also
used automatically when numba is not importable).  ``BACKEND`` names the
active path.
"""

import importlib
import os

from . import numpy_impl

_disabled = os.environ.get("MDCC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

numba_impl = None
if not _disabled:
    try:
        numba_impl = importlib.import_module(".numba_impl", __name__)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

_active = numba_impl if numba_impl is not None else numpy_impl
BACKEND = "numba" if numba_impl is not None else "numpy"

eo_batch = _active.eo_batch
maximize_e0 = _active.maximize_e0
ml_table = _active.ml_table
region_masses = _active.region_masses
density_tail_masses = _active.density_tail_masses
mc_decode = _active.mc_decode
output_terms = numpy_impl.output_terms

__all__ = [
    "BACKEND",
    "eo_batch",
    "maximize_e0",
    "ml_table",
    "region_masses",
    "density_tail_masses",
    "mc_decode",
    "output_terms",
    "numpy_impl",
    "numba_impl",
]
