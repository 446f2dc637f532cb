"""Synthetic benchmark generators.

``two-cluster``: two horizontally elongated point clouds stacked
vertically.  Each class is a *dumbbell*: two isotropic blobs at
x = ±``ARM_X`` sharing the class height y = ±``GAP_Y``, with points
alternating between the arms by index parity and jittered by isotropic
Gaussian noise of scale ``noise``.  Because the arms are slightly farther
apart than the classes (``ARM_X`` > ``GAP_Y``), a two-component mixture
actually *prefers* the wrong, vertical left/right split: it is both the
higher-likelihood unsupervised model and a genuine EM fixed point, while
the ground truth is the horizontal top/bottom split.  Pairwise relations
between the arm extremes are what flip the model ranking back.

``two-moons``: the standard interleaved half-circles. The first moon is the
upper unit half-circle, the second is shifted right by 1 and down by 0.5,
plus isotropic Gaussian noise.
"""

from __future__ import annotations

import numpy as np

from .errors import InvariantViolationError
from .initialize import make_rng
from .types import Dataset

ARM_X = 1.1
GAP_Y = 1.0

DEFAULT_NOISE = {"two-cluster": 0.25, "two-moons": 0.05}


def gen_synthetic(kind: str, n_per_class: int, noise: float, seed: int) -> Dataset:
    """Deterministic labeled sample of one of the 2-D benchmark shapes."""
    if kind not in ("two-cluster", "two-moons"):
        raise InvariantViolationError(f"unknown synthetic kind {kind!r}")
    if n_per_class < 1:
        raise InvariantViolationError("n_per_class must be >= 1")
    if noise < 0:
        raise InvariantViolationError("noise must be nonnegative")
    rng = make_rng(seed)
    n = int(n_per_class)

    if kind == "two-cluster":
        arms = np.where(np.arange(n) % 2 == 0, -ARM_X, ARM_X)
        points = np.empty((2 * n, 2))
        for c, y_c in enumerate((GAP_Y, -GAP_Y)):
            base = np.column_stack([arms, np.full(n, y_c)])
            points[c * n : (c + 1) * n] = base + noise * rng.standard_normal((n, 2))
    else:
        t = np.linspace(0.0, np.pi, n)
        upper = np.column_stack([np.cos(t), np.sin(t)])
        lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        points = np.vstack([upper, lower])
        if noise > 0:
            points = points + noise * rng.standard_normal(points.shape)

    labels = np.repeat(np.arange(2, dtype=np.int64), n)
    return Dataset(points=points, labels=labels)
