"""Process-level runtime knobs: seeding and the thread cap.

Every stochastic routine in the package takes a single 64-bit integer seed and
builds its generator through :func:`make_rng`, so one seed fully determines a
run. ``CTXKIT_THREADS`` caps the worker pool used by multi-seed experiment
sweeps; unset, empty, or invalid values mean "run sequentially".
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["make_rng", "thread_cap", "THREADS_ENV_VAR"]

THREADS_ENV_VAR = "CTXKIT_THREADS"


def make_rng(seed: int | None) -> np.random.Generator:
    """Build the package-standard PRNG from a single 64-bit seed."""
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def thread_cap() -> int:
    """Maximum worker threads for parallel sweeps (>= 1)."""
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)
