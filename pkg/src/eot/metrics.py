"""Distance and scoring metrics over candidate answers.

Covers the character-level edit distance, the cosine-based semantic
distance, the combined novelty score used as the second search objective,
quality-reply parsing, and the pairwise distance matrix consumed by the
condensation step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EmbeddingVector = np.ndarray


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance over Unicode scalar values, unit costs."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.shape != b.shape:
        raise ValueError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate embedding: zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def semantic_pair_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """(1 - cosine(a, b)) / 2, clamped to [0, 1].

    The halving puts the semantic term on the same scale as the normalized
    edit term, so the two can be summed.
    """
    d = (1.0 - _cosine(a, b)) / 2.0
    return min(max(d, 0.0), 1.0)


def _edit_sums(answers: Sequence[str]) -> list[int]:
    n = len(answers)
    dist = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = edit_distance(answers[i], answers[j])
            dist[i][j] = d
            dist[j][i] = d
    return [sum(row) for row in dist]


def novelty_scores(
    answers: Sequence[str], embeddings: Sequence[EmbeddingVector]
) -> list[float]:
    """Novelty of each answer relative to the rest of the set.

    Per answer the score is the sum of two terms in [0, 1] each:

    * the total edit distance to every other answer, divided by the
      largest such total in the set (0 for everyone when all totals are
      zero, i.e. all answers are pairwise identical);
    * the mean halved cosine distance to every other answer's embedding.

    Results therefore lie in [0, 2]. Needs at least two answers.
    """
    n = len(answers)
    if n != len(embeddings):
        raise ValueError("answers and embeddings must have equal length")
    if n < 2:
        raise ValueError("novelty undefined for fewer than two answers")
    sums = _edit_sums(answers)
    top = max(sums)
    term1 = [s / top if top > 0 else 0.0 for s in sums]
    scores = []
    for i in range(n):
        sem = sum(
            semantic_pair_distance(embeddings[i], embeddings[j])
            for j in range(n)
            if j != i
        )
        scores.append(term1[i] + sem / (n - 1))
    return scores


_INT_RUN = re.compile(r"\d+")


def parse_quality(model_reply: str) -> float:
    """Parse a 0-100 quality score from a grading reply, normalized to [0, 1].

    The first integer in range wins; out-of-range integers are skipped.
    Raises ValueError when no usable integer appears.
    """
    for match in _INT_RUN.finditer(model_reply):
        value = int(match.group())
        if value <= 100:
            return value / 100.0
    raise ValueError(f"unscorable reply: {model_reply!r}")


def format_quality(score: int) -> str:
    """Render a score the way the grading prompt demands it."""
    return f"Score: {score}"


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise answer distances with a zero diagonal.

    Entries combine a max-normalized edit term (<= 1) and a halved cosine
    term (<= 1), so every entry lies in [0, 2].
    """

    n: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        e = self.entries
        if e.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} matrix, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(np.diagonal(e) != 0.0):
            raise ValueError("distance matrix diagonal must be zero")
        if not np.array_equal(e, e.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(e < 0.0) or np.any(e > 2.0):
            raise ValueError("distance matrix entries must lie in [0, 2]")


def ca_distance_matrix(
    answers: Sequence[str], embeddings: Sequence[EmbeddingVector]
) -> DistanceMatrix:
    """Pairwise distance matrix feeding k-medoids condensation.

    Entry (i, j) is edit_distance(i, j) normalized by the largest pairwise
    edit distance in the set, plus the halved cosine distance of the
    embeddings. When every pair has edit distance zero the edit term is
    zero everywhere.
    """
    n = len(answers)
    if n != len(embeddings):
        raise ValueError("answers and embeddings must have equal length")
    if n < 2:
        raise ValueError("need at least two answers")
    ed = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            ed[i, j] = ed[j, i] = edit_distance(answers[i], answers[j])
    top = float(ed.max())
    entries = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = (ed[i, j] / top if top > 0 else 0.0) + semantic_pair_distance(
                embeddings[i], embeddings[j]
            )
            entries[i, j] = entries[j, i] = d
    return DistanceMatrix(n=n, entries=entries)
