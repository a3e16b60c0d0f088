"""Fitness objectives: classification error and model size, both minimized."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ObjectiveVector:
    error_rate: float
    param_count: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.error_rate, self.param_count)

    def dominates(self, other: "ObjectiveVector") -> bool:
        return dominates(self.as_tuple(), other.as_tuple())

    @property
    def finite(self) -> bool:
        return math.isfinite(self.error_rate) and math.isfinite(self.param_count)


def dominates(a, b) -> bool:
    """Strict Pareto dominance under minimization: a <= b everywhere, < somewhere."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def sentinel_objectives(param_cap: float) -> ObjectiveVector:
    """Worst-case objectives assigned to failed or diverged evaluations."""
    return ObjectiveVector(1.0, float(param_cap))
