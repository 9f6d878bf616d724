"""Common result container for divergence metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DataError

LOWER_BETTER = "lower-better"
HIGHER_BETTER = "higher-better"

# Which direction each metric improves in. Getting this wrong silently flips
# the sign of every rank correlation downstream, so it is pinned here once.
ORIENTATION = {
    "fad": LOWER_BETTER,
    "mmd": LOWER_BETTER,
    "mad": LOWER_BETTER,
    "mauve": HIGHER_BETTER,
    "precision": HIGHER_BETTER,
    "recall": HIGHER_BETTER,
    "density": HIGHER_BETTER,
    "coverage": HIGHER_BETTER,
}


@dataclass(frozen=True)
class DivergenceScore:
    """One metric value plus everything needed to reproduce it."""

    metric: str
    value: float
    orientation: str
    config: dict = field(default_factory=dict)
    n_reference: int = 0
    n_candidate: int = 0
    wall_time_s: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DataError(f"{self.metric}: non-finite metric value {self.value!r}")
        if self.orientation not in (LOWER_BETTER, HIGHER_BETTER):
            raise DataError(f"unknown orientation {self.orientation!r}")
