"""Backend selection for the ROUGE kernels.

The compiled extension is used when importable; set ``EASE_PURE_PYTHON=1``
to force the pure-Python implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("EASE_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

lcs_length = backend.lcs_length
ngram_overlap = backend.ngram_overlap
