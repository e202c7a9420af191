"""Condensation and aggregation of a scored population into one answer.

The candidate set is clustered with k-medoids over the combined
edit/semantic distance matrix, the lowest-quality clusters are dropped,
and the surviving cluster medoids are handed to the model in one
aggregation call that produces the final answer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import ModelBackend
from .embedding import EmbeddingProvider
from .engine import Population, QueryContext
from .exceptions import BackendError
from .metrics import DistanceMatrix, ca_distance_matrix
from .prompts import PromptTemplates

MAX_ALTERNATIONS = 100


@dataclass
class Cluster:
    """One k-medoids cluster: members, representative, mean quality."""

    member_ids: tuple[int, ...]
    medoid_id: int
    avg_quality: float | None = None

    def __post_init__(self) -> None:
        if self.medoid_id not in self.member_ids:
            raise ValueError("medoid must be a cluster member")


@dataclass(frozen=True)
class CondensedSet:
    """Surviving medoids (best cluster first) plus the dropped clusters."""

    medoids: tuple[int, ...]
    dropped: tuple[Cluster, ...]


def _as_matrix(dist: DistanceMatrix | np.ndarray) -> np.ndarray:
    if isinstance(dist, DistanceMatrix):
        return dist.entries
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix has non-finite entries")
    if np.any(np.diagonal(d) != 0.0) or np.any(d < 0) or not np.array_equal(d, d.T):
        raise ValueError("need a symmetric non-negative matrix with zero diagonal")
    return d


def pam_objective(dist: DistanceMatrix | np.ndarray, medoids: Sequence[int]) -> float:
    """Total distance from every point to its nearest medoid."""
    d = _as_matrix(dist)
    return float(sum(min(d[p, m] for m in medoids) for p in range(d.shape[0])))


def _assign(d: np.ndarray, medoids: list[int]) -> dict[int, list[int]]:
    # Medoids stay in their own cluster; everyone else goes to the nearest
    # medoid, ties to the lower medoid id.
    clusters: dict[int, list[int]] = {m: [m] for m in medoids}
    medoid_set = set(medoids)
    for p in range(d.shape[0]):
        if p in medoid_set:
            continue
        nearest = min(medoids, key=lambda m: (d[p, m], m))
        clusters[nearest].append(p)
    return clusters


def _recompute_medoids(d: np.ndarray, clusters: dict[int, list[int]]) -> list[int]:
    new_medoids = []
    for members in clusters.values():
        best = min(members, key=lambda c: (sum(d[c, x] for x in members), c))
        new_medoids.append(best)
    return sorted(new_medoids)


def _best_swap(d: np.ndarray, medoids: list[int]) -> list[int] | None:
    current = pam_objective(d, medoids)
    n = d.shape[0]
    best: tuple[float, int, int] | None = None
    for m in medoids:
        for p in range(n):
            if p in medoids:
                continue
            trial = [x for x in medoids if x != m] + [p]
            obj = pam_objective(d, trial)
            if obj < current and (best is None or (obj, p, m) < best):
                best = (obj, p, m)
    if best is None:
        return None
    _, p, m = best
    return sorted(x for x in medoids if x != m) + [p]


def k_medoids(
    dist: DistanceMatrix | np.ndarray,
    kappa: int,
    rng: random.Random,
    history: list[float] | None = None,
) -> list[Cluster]:
    """PAM-style k-medoids over a precomputed distance matrix.

    Seeding is greedy farthest-first from an rng-chosen start point.
    Alternation (assign to nearest medoid, recompute each cluster's
    medoid) runs to a fixed point, then single-swap improvements are
    applied until none remains, re-stabilizing after each swap. The
    objective never increases; pass ``history`` to observe it per step.

    Returns clusters sorted by medoid id, members ascending.
    """
    d = _as_matrix(dist)
    n = d.shape[0]
    if n < 1:
        raise ValueError("empty distance matrix")
    if kappa < 1 or kappa > n:
        raise ValueError(f"more clusters than points: kappa={kappa}, n={n}")

    medoids = [rng.randrange(n)]
    while len(medoids) < kappa:
        farthest = max(
            (p for p in range(n) if p not in medoids),
            key=lambda p: (min(d[p, m] for m in medoids), -p),
        )
        medoids.append(farthest)
    medoids = sorted(medoids)

    def stabilize(ms: list[int]) -> tuple[list[int], dict[int, list[int]]]:
        clusters = _assign(d, ms)
        for _ in range(MAX_ALTERNATIONS):
            if history is not None:
                history.append(pam_objective(d, ms))
            new_ms = _recompute_medoids(d, clusters)
            new_clusters = _assign(d, new_ms)
            if new_ms == ms:
                return ms, clusters
            ms, clusters = new_ms, new_clusters
        return ms, clusters

    medoids, clusters = stabilize(medoids)
    while True:
        swapped = _best_swap(d, medoids)
        if swapped is None:
            break
        medoids, clusters = stabilize(swapped)

    return [
        Cluster(member_ids=tuple(sorted(members)), medoid_id=m)
        for m, members in sorted(clusters.items())
    ]


def condense(
    pop: Population,
    kappa: int,
    m: int,
    rng: random.Random,
    embedder: EmbeddingProvider,
) -> CondensedSet:
    """Cluster the scored population and keep the best-cluster medoids.

    Clusters are ranked by mean member quality; the ``m`` worst are
    dropped (ties drop the higher cluster index) and the survivors'
    medoids come back ordered best cluster first.
    """
    if m >= kappa:
        raise ValueError("nothing would survive: m must be < kappa")
    for c in pop.candidates:
        if c.quality is None:
            raise ValueError(f"score missing for candidate {c.id}")
    texts = pop.texts()
    dist = ca_distance_matrix(texts, embedder.embed_many(texts))
    positional = k_medoids(dist, kappa, rng)

    ids = [c.id for c in pop.candidates]
    quality = {c.id: c.quality for c in pop.candidates}
    clusters = []
    for cluster in positional:
        member_ids = tuple(ids[p] for p in cluster.member_ids)
        avg = float(np.mean([quality[i] for i in member_ids]))
        clusters.append(
            Cluster(member_ids=member_ids, medoid_id=ids[cluster.medoid_id],
                    avg_quality=avg)
        )

    order = sorted(range(len(clusters)), key=lambda i: (clusters[i].avg_quality, -i))
    dropped_idx = set(order[:m])
    survivors = sorted(
        (i for i in range(len(clusters)) if i not in dropped_idx),
        key=lambda i: (-clusters[i].avg_quality, i),
    )
    return CondensedSet(
        medoids=tuple(clusters[i].medoid_id for i in survivors),
        dropped=tuple(clusters[i] for i in order[:m]),
    )


def aggregate(
    ctx: QueryContext,
    condensed: CondensedSet,
    pop: Population,
    backend: ModelBackend,
    templates: PromptTemplates | None = None,
) -> str:
    """One model call that folds the surviving medoid answers into the
    final answer, returned verbatim."""
    if not condensed.medoids:
        raise ValueError("condensed set is empty")
    templates = templates or PromptTemplates.load()
    answers = [pop.by_id(i).text for i in condensed.medoids]
    prompt = templates.render_aggregate(ctx.question, answers)
    try:
        return backend.complete(prompt, kind="aggregate", image=ctx.image)
    except BackendError as exc:
        raise BackendError(f"aggregation failed: {exc}") from exc
