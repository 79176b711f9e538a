"""
Seeded random streams.

Every stream is a pure function of (seed, purpose, indices...), so work that is
split across threads or resumed from a checkpoint draws identical numbers.
"""

from typing import Sequence

import numpy as np

INIT_STREAM = 0
TASK_STREAM = 1
ROLLOUT_STREAM = 2
SCENE_STREAM = 3


def derive_rng(seed: int, stream: int, *indices: int) -> np.random.Generator:
    if seed < 0 or any(i < 0 for i in indices):
        raise ValueError(f"seed and stream indices must be non-negative, got {seed}, {indices}")
    return np.random.default_rng(np.random.SeedSequence([seed, stream, *indices]))


def rollout_rngs(
    seed: int, step: int, slot: int, group_size: int
) -> Sequence[np.random.Generator]:
    """One independent generator per response of a group."""
    return [derive_rng(seed, ROLLOUT_STREAM, step, slot, i) for i in range(group_size)]


def batch_indices(seed: int, step: int, batch_size: int, num_tasks: int) -> np.ndarray:
    """Task indices for one training step, sampled with replacement."""
    if num_tasks < 1:
        raise ValueError("cannot sample from an empty task list")
    return derive_rng(seed, TASK_STREAM, step).integers(0, num_tasks, size=batch_size)
