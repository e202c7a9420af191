"""Dominance relations, level assignment, and parent selection.

The search treats every candidate answer as a point in the
(quality, novelty) plane and ranks the population without collapsing the
two objectives into one number. Two level-assignment modes exist:

* ``count`` groups candidates by how many others each one dominates
  (more dominated -> better level); this is the default.
* ``classical`` peels non-dominated fronts the NSGA-II way: level 1 is
  the non-dominated set, then the non-dominated set of the remainder,
  and so on.

The two modes agree on many inputs but not all; both are exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

LEVEL_MODES = ("count", "classical")


@dataclass(frozen=True)
class ScorePair:
    """Objective vector of one candidate: quality in [0,1], novelty in [0,2]."""

    quality: float
    novelty: float

    def __post_init__(self) -> None:
        for name, value, hi in (("quality", self.quality, 1.0), ("novelty", self.novelty, 2.0)):
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if not 0.0 <= value <= hi:
                raise ValueError(f"{name} must lie in [0, {hi}], got {value!r}")


def dominates(a: ScorePair, b: ScorePair) -> bool:
    """Strict Pareto dominance: a is at least as good in both objectives
    and strictly better in at least one. Identical points do not dominate
    each other, which keeps the relation a strict partial order."""
    return (
        a.quality >= b.quality
        and a.novelty >= b.novelty
        and (a.quality > b.quality or a.novelty > b.novelty)
    )


@dataclass(frozen=True)
class LevelAssignment:
    """Partition of a population into ordered levels (level 1 first).

    ``levels`` holds candidate ids, ascending within each level.
    ``dominance_count`` maps every candidate id to the number of
    candidates it dominates, regardless of which mode built the levels.
    """

    levels: tuple[tuple[int, ...], ...]
    dominance_count: Mapping[int, int]

    def level_of(self, candidate_id: int) -> int:
        for index, level in enumerate(self.levels, start=1):
            if candidate_id in level:
                return index
        raise KeyError(candidate_id)


def _dominance_counts(
    population: Sequence[ScorePair], ids: Sequence[int]
) -> dict[int, int]:
    counts = {i: 0 for i in ids}
    for i, a in zip(ids, population):
        for j, b in zip(ids, population):
            if i != j and dominates(a, b):
                counts[i] += 1
    return counts


def _resolve_ids(population: Sequence[ScorePair], ids: Sequence[int] | None) -> list[int]:
    if not population:
        raise ValueError("empty population")
    resolved = list(range(len(population))) if ids is None else list(ids)
    if len(resolved) != len(population):
        raise ValueError("ids must match population length")
    if len(set(resolved)) != len(resolved):
        raise ValueError("ids must be unique")
    return resolved


def assign_levels(
    population: Sequence[ScorePair], ids: Sequence[int] | None = None
) -> LevelAssignment:
    """Group candidates by dominance count, highest count first.

    Every candidate in a level shares the same count and counts strictly
    decrease from level 1 downward.
    """
    resolved = _resolve_ids(population, ids)
    counts = _dominance_counts(population, resolved)
    levels: list[tuple[int, ...]] = []
    for count in sorted(set(counts.values()), reverse=True):
        levels.append(tuple(sorted(i for i in resolved if counts[i] == count)))
    return LevelAssignment(levels=tuple(levels), dominance_count=counts)


def assign_levels_classical(
    population: Sequence[ScorePair], ids: Sequence[int] | None = None
) -> LevelAssignment:
    """Iterative front peeling: level 1 is the non-dominated set, then
    the non-dominated set of what remains, and so on."""
    resolved = _resolve_ids(population, ids)
    counts = _dominance_counts(population, resolved)
    by_id = dict(zip(resolved, population))
    remaining = list(resolved)
    levels: list[tuple[int, ...]] = []
    while remaining:
        front = [
            i
            for i in remaining
            if not any(dominates(by_id[j], by_id[i]) for j in remaining if j != i)
        ]
        levels.append(tuple(sorted(front)))
        front_set = set(front)
        remaining = [i for i in remaining if i not in front_set]
    return LevelAssignment(levels=tuple(levels), dominance_count=counts)


class Ranked(Protocol):
    """Anything selectable: carries a stable id and a quality score."""

    id: int
    quality: float | None


def select_parents(
    population: Sequence[Ranked], levels: LevelAssignment, k: int
) -> list:
    """Pick the k best candidates, walking levels from level 1 downward.

    Within a level, candidates are ordered by descending quality with
    ties broken by ascending id, so the result is deterministic for a
    given input.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(population):
        raise ValueError(
            f"insufficient candidates: requested {k} of {len(population)}"
        )
    by_id = {c.id: c for c in population}
    picked: list = []
    for level in levels.levels:
        members = sorted(
            (by_id[i] for i in level), key=lambda c: (-(c.quality or 0.0), c.id)
        )
        for candidate in members:
            picked.append(candidate)
            if len(picked) == k:
                return picked
    return picked
