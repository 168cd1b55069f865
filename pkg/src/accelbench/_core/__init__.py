"""Grid-scan kernel selection: compiled extension when available, pure
Python otherwise. Set ``ACCELBENCH_PURE_PYTHON=1`` to force the fallback
(used by the benchmark in ``benchmarks/bench_core.py`` and by tests that
compare the two paths).
"""

from __future__ import annotations

import os

from .py_fallback import compose_effects
from .py_fallback import scan_max_speedup as _scan_py

if os.environ.get("ACCELBENCH_PURE_PYTHON", "") not in ("", "0"):
    scan_max_speedup = _scan_py
    KERNEL_BACKEND = "python"
else:
    try:
        from ._scan import scan_max_speedup  # type: ignore[no-redef]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        scan_max_speedup = _scan_py
        KERNEL_BACKEND = "python"

scan_max_speedup_py = _scan_py

__all__ = ["compose_effects", "scan_max_speedup", "scan_max_speedup_py", "KERNEL_BACKEND"]
