"""Small two-sample statistics used as training diagnostics and test oracles."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Plug-in energy distance 2 E||X-Y|| - E||X-X'|| - E||Y-Y'||.

    x and y are (N, D) sample blocks.  V-statistic form (within-sample means
    include the zero diagonal), which keeps the value non-negative; used as
    a parameter-free distribution-match diagnostic, never optimized.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    between = cdist(x, y).mean()
    within_x = cdist(x, x).mean()
    within_y = cdist(y, y).mean()
    return float(2.0 * between - within_x - within_y)
