"""Backend selection for the forest kernels.

The compiled module is preferred; setting ``METERXAI_PURE_PYTHON=1`` forces
the numpy fallback (used by the benchmark and the equivalence tests).
"""

import os

from . import _kernels_py

BACKEND = "python"
best_split = _kernels_py.best_split
predict_forest = _kernels_py.predict_forest

if os.environ.get("METERXAI_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels_ext
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "compiled"
        best_split = _kernels_ext.best_split
        predict_forest = _kernels_ext.predict_forest
