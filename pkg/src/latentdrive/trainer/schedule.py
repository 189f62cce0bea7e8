"""Teacher-forcing warm-up schedule."""

from __future__ import annotations

import math


def warmup_count(epoch: int, start: int = 18, end_epoch: int = 100) -> int:
    """Teacher-forced step count: linear decay from `start` to 1 at `end_epoch`.

    Rounding is half-up so the schedule is exactly reproducible.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    progress = min(epoch, end_epoch) / end_epoch
    value = start - (start - 1) * progress
    return max(1, int(math.floor(value + 0.5)))
