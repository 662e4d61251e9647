"""Space-filling initial designs on the unit cube over the active dimensions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DesignControl:
    init_size: int = 10
    repeats: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.init_size < 1:
            raise ValueError("init_size must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


def latin_hypercube(control: DesignControl, dims: int) -> np.ndarray:
    """Latin hypercube sample of ``init_size`` points in [0, 1)^dims.

    Per dimension, exactly one base point falls in each of the init_size
    equal-width strata (uniform jitter inside the cell; the single point of
    a size-1 design sits at the cell center). Each base point is then
    duplicated ``repeats`` times, consecutively. Deterministic per seed.
    """
    if dims < 1:
        raise ValueError("dims must be >= 1")
    n = control.init_size
    rng = np.random.default_rng(control.seed)
    base = np.empty((n, dims), dtype=float)
    for d in range(dims):
        perm = rng.permutation(n)
        jitter = np.full(n, 0.5) if n == 1 else rng.random(n)
        base[:, d] = (perm + jitter) / n
    return np.repeat(base, control.repeats, axis=0)
