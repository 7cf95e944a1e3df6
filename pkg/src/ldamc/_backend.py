"""Select the symbol-scan kernel at import time.

The compiled kernel is used when it imports; set ``LDAMC_PURE_PYTHON=1`` to
force the NumPy fallback.
"""

import os

from ._scan_py import scan_symbols as scan_symbols_py

try:
    from ._scan import scan_symbols as scan_symbols_c
except ImportError:  # extension not built
    scan_symbols_c = None

if scan_symbols_c is not None and not os.environ.get("LDAMC_PURE_PYTHON"):
    scan_symbols = scan_symbols_c
    BACKEND = "cython"
else:
    scan_symbols = scan_symbols_py
    BACKEND = "python"

__all__ = ["scan_symbols", "scan_symbols_py", "scan_symbols_c", "BACKEND"]
