"""Worker-count resolution and deterministic seed derivation."""

from __future__ import annotations

import os

import numpy as np

__all__ = ["worker_count", "derive_seed", "THREADS_ENV"]

THREADS_ENV = "REGRET_TUNE_THREADS"


def worker_count() -> int:
    """Worker cap from the environment, defaulting to min(cpu_count, 4)."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, min(os.cpu_count() or 1, 4))


def derive_seed(master: int, *key: int) -> int:
    """Stable 64-bit seed for the substream identified by ``key``.

    Keyed derivation (not sequential spawning) keeps every substream
    independent of scheduling and of how many workers consume them.
    """
    ss = np.random.SeedSequence(
        entropy=int(master), spawn_key=tuple(int(k) for k in key)
    )
    return int(ss.generate_state(1, np.uint64)[0])
