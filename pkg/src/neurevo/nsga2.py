"""NSGA-II selection machinery and the elitist Pareto archive.

Both objectives are minimized. Selection fills whole fronts in rank order
and breaks the last partial front by descending crowding distance, with ties
resolved by lower individual id so runs stay deterministic.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

from .gptree import Individual
from .objectives import ObjectiveVector, dominates


def fast_nondominated_sort(objs: Sequence[Sequence[float]]) -> list[list[int]]:
    """Deb's bookkeeping sort; returns fronts as lists of indices."""
    n = len(objs)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(p + 1, n):
            if dominates(objs[p], objs[q]):
                dominated_by[p].append(q)
                counts[q] += 1
            elif dominates(objs[q], objs[p]):
                dominated_by[q].append(p)
                counts[p] += 1
    for p in range(n):
        if counts[p] == 0:
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    nxt.append(q)
        i += 1
        fronts.append(sorted(nxt))
    fronts.pop()
    return fronts


def crowding_distance(front: Sequence[Sequence[float]]) -> list[float]:
    """Per-point crowding distances; boundary points get +inf on each objective."""
    n = len(front)
    if n == 0:
        return []
    dist = [0.0] * n
    n_objs = len(front[0])
    for m in range(n_objs):
        order = sorted(range(n), key=lambda i: front[i][m])
        lo = front[order[0]][m]
        hi = front[order[-1]][m]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo:
            continue  # zero-range objective contributes nothing
        for k in range(1, n - 1):
            i = order[k]
            if dist[i] != math.inf:
                dist[i] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / (hi - lo)
    return dist


def nsga2_select(pop: Sequence[Individual], k: int) -> list[Individual]:
    """Select k individuals by (rank, crowding distance, lower id)."""
    if k > len(pop):
        raise ValueError(f"cannot select {k} from population of {len(pop)}")
    objs = [ind.objectives.as_tuple() for ind in pop]
    selected: list[Individual] = []
    for front in fast_nondominated_sort(objs):
        if len(selected) + len(front) <= k:
            selected.extend(pop[i] for i in front)
            if len(selected) == k:
                break
            continue
        crowd = crowding_distance([objs[i] for i in front])
        order = sorted(range(len(front)),
                       key=lambda j: (-crowd[j], pop[front[j]].id))
        selected.extend(pop[front[j]] for j in order[: k - len(selected)])
        break
    return selected


def hypervolume_2d(points: Iterable[Sequence[float]], ref: Sequence[float]) -> float:
    """Area dominated by a 2-D point set within the box bounded by ``ref``."""
    clipped = [p for p in points if p[0] < ref[0] and p[1] < ref[1]]
    if not clipped:
        return 0.0
    clipped.sort(key=lambda p: (p[0], p[1]))
    # reduce to the dominating staircase, then sum strips against the ref box
    stair: list[tuple[float, float]] = []
    best_second = math.inf
    for p in clipped:
        if p[1] < best_second:
            stair.append((p[0], p[1]))
            best_second = p[1]
    area = 0.0
    for i, (f0, f1) in enumerate(stair):
        next_f0 = stair[i + 1][0] if i + 1 < len(stair) else ref[0]
        area += (next_f0 - f0) * (ref[1] - f1)
    return area


class ParetoArchive:
    """Elitist set of mutually non-dominated individuals across the whole run."""

    def __init__(self):
        self._members: list[Individual] = []
        self._expressions: set[str] = set()

    def __len__(self) -> int:
        return len(self._members)

    @property
    def members(self) -> list[Individual]:
        return list(self._members)

    def update(self, individuals: Iterable[Individual]) -> int:
        """Insert evaluated individuals; returns how many were admitted."""
        added = 0
        for ind in individuals:
            if ind.objectives is None:
                raise ValueError("archive only accepts evaluated individuals")
            obj = ind.objectives.as_tuple()
            if any(dominates(m.objectives.as_tuple(), obj) for m in self._members):
                continue
            expr = ind.expression()
            if expr in self._expressions:
                continue
            survivors = []
            for m in self._members:
                if dominates(obj, m.objectives.as_tuple()):
                    self._expressions.discard(m.expression())
                else:
                    survivors.append(m)
            survivors.append(ind)
            self._members = survivors
            self._expressions.add(expr)
            added += 1
        return added

    def best_error(self) -> float:
        if not self._members:
            return math.inf
        return min(m.objectives.error_rate for m in self._members)

    def hypervolume(self, ref: Sequence[float]) -> float:
        return hypervolume_2d([m.objectives.as_tuple() for m in self._members], ref)
