"""Ready-made regular parameters for the bundled examples."""

from __future__ import annotations

import numpy as np

# Fermat x1^3 + x2^3 + x3^3, basis order (x1x2x3, x1x2, x1x3, x2x3, x1, x2, x3, 1).
# One compact oval in the positive octant; the unbounded part of {F <= 0}
# stays outside the ball of radius FERMAT3_RADIUS.
FERMAT3_LAMBDA = (0.2106, 0.5086, 0.5046, 0.506, -0.7861, -0.7868, -0.7879, 0.4674)
FERMAT3_RADIUS = 0.815


def fermat_regular_lambda() -> np.ndarray:
    return np.array(FERMAT3_LAMBDA, dtype=float)


PRESET_RADIUS = {"morse": 1.5, "shell": 2.5, "fermat:3": FERMAT3_RADIUS}
