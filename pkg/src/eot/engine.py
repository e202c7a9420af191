"""The evolutionary answer-search loop.

One search run is: generate an initial population of candidate answers
plus a reference answer, then repeat for a fixed number of generations
{score everything new, recompute novelty for everyone, select parents by
dominance level, breed crossover and mutation offspring}, and finish
with one more scoring pass so no candidate is left unscored. Candidates
are only ever added, never evicted, so the population doubles each
generation.
"""

from __future__ import annotations

import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .backend import ImagePayload, ModelBackend
from .embedding import EmbeddingProvider, HashedTrigramEmbedder
from .exceptions import BackendError
from .metrics import novelty_scores, parse_quality
from .pareto import LEVEL_MODES, LevelAssignment, ScorePair, assign_levels, \
    assign_levels_classical, select_parents
from .prompts import PromptTemplates

logger = logging.getLogger(__name__)

SCORE_PARSE_ATTEMPTS = 3


@dataclass(frozen=True)
class Lineage:
    """How a candidate came to exist: initial sample, crossover, or mutation."""

    kind: str
    parents: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        expected = {"initial": 0, "crossover": 2, "mutation": 1}
        if self.kind not in expected:
            raise ValueError(f"unknown lineage kind: {self.kind!r}")
        if len(self.parents) != expected[self.kind]:
            raise ValueError(f"{self.kind} lineage needs {expected[self.kind]} parents")
        if self.kind == "crossover" and self.parents[0] == self.parents[1]:
            raise ValueError("crossover parents must be distinct")

    @classmethod
    def initial(cls) -> "Lineage":
        return cls("initial")

    @classmethod
    def crossover(cls, a: int, b: int) -> "Lineage":
        return cls("crossover", (a, b))

    @classmethod
    def mutation(cls, parent: int) -> "Lineage":
        return cls("mutation", (parent,))


@dataclass
class Candidate:
    """One answer in the population, with its scores once assigned."""

    id: int
    text: str
    generation: int
    lineage: Lineage
    quality: float | None = None
    novelty: float | None = None

    def score_pair(self) -> ScorePair:
        if self.quality is None or self.novelty is None:
            raise ValueError(f"score missing for candidate {self.id}")
        return ScorePair(quality=self.quality, novelty=self.novelty)


@dataclass
class QueryContext:
    """One question, optionally with an opaque image payload."""

    question: str
    image_bytes: bytes | None = None
    image_media_type: str | None = None
    ground_truth: str | None = None

    @property
    def image(self) -> ImagePayload | None:
        if self.image_bytes is None:
            return None
        return (self.image_bytes, self.image_media_type or "application/octet-stream")


@dataclass
class Population:
    """The evolving state of one question's search."""

    candidates: list[Candidate]
    reference: str
    question: QueryContext

    @property
    def size(self) -> int:
        return len(self.candidates)

    def by_id(self, candidate_id: int) -> Candidate:
        for c in self.candidates:
            if c.id == candidate_id:
                return c
        raise KeyError(candidate_id)

    def texts(self) -> list[str]:
        return [c.text for c in self.candidates]

    def all_scored(self) -> bool:
        return all(c.quality is not None and c.novelty is not None for c in self.candidates)


def parse_ratio(value: float | int | str) -> float:
    """Accept a crossover:mutation ratio as a number or an ``a:b`` string."""
    if isinstance(value, str):
        if ":" in value:
            num, _, den = value.partition(":")
            try:
                ratio = float(num) / float(den)
            except (ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"invalid ratio: {value!r}") from exc
        else:
            try:
                ratio = float(value)
            except ValueError as exc:
                raise ValueError(f"invalid ratio: {value!r}") from exc
    else:
        ratio = float(value)
    if not math.isfinite(ratio) or ratio <= 0:
        raise ValueError(f"ratio must be a positive finite number, got {value!r}")
    return ratio


@dataclass(frozen=True)
class RunConfig:
    """All search hyperparameters.

    ``initial_candidates`` first-generation answers are drawn per
    question; the loop runs ``generations`` times; offspring split
    crossover:mutation at ``crossover_ratio``; ``parents`` candidates are
    selected each generation; condensation builds ``clusters`` clusters
    and drops the ``drop_clusters`` worst.
    """

    initial_candidates: int = 3
    generations: int = 2
    crossover_ratio: float = 2.0
    parents: int = 3
    clusters: int = 5
    drop_clusters: int = 1
    seed: int = 0
    level_mode: str = "count"

    def __post_init__(self) -> None:
        if self.initial_candidates < 2:
            raise ValueError("initial_candidates must be >= 2 (novelty needs a peer set)")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not math.isfinite(self.crossover_ratio) or self.crossover_ratio <= 0:
            raise ValueError("crossover_ratio must be > 0")
        if self.parents < 2:
            raise ValueError("parents must be >= 2 (crossover needs a pair)")
        if self.parents > self.initial_candidates:
            raise ValueError("parents must not exceed initial_candidates")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")
        if not 0 <= self.drop_clusters < self.clusters:
            raise ValueError("drop_clusters must satisfy 0 <= m < clusters")
        if self.level_mode not in LEVEL_MODES:
            raise ValueError(f"level_mode must be one of {LEVEL_MODES}")

    @property
    def final_population_size(self) -> int:
        return self.initial_candidates * 2**self.generations


def offspring_split(budget: int, ratio: float) -> tuple[int, int]:
    """Split an offspring budget into (crossover, mutation) counts.

    Rounds half up and clamps both counts to at least 1.
    """
    if budget < 2:
        raise ValueError("offspring budget must be >= 2")
    n_cross = math.floor(budget * ratio / (1.0 + ratio) + 0.5)
    n_cross = min(max(n_cross, 1), budget - 1)
    return n_cross, budget - n_cross


def _fan_out(jobs: Sequence[Callable[[], object]], max_workers: int) -> list:
    """Run jobs, optionally in parallel; results keep job order."""
    if max_workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


class EvolutionEngine:
    """Drives the search for one question at a time.

    Not safe to share across concurrent runs; create one engine per run.
    Within a phase, backend calls may fan out over ``max_workers``
    threads; results are merged in candidate-id order so the outcome is
    identical to the sequential run.
    """

    def __init__(
        self,
        cfg: RunConfig,
        backend: ModelBackend,
        embedder: EmbeddingProvider | None = None,
        templates: PromptTemplates | None = None,
        rng: random.Random | None = None,
        trace: list | None = None,
        max_workers: int = 1,
    ):
        self.cfg = cfg
        self.backend = backend
        self.embedder = embedder or HashedTrigramEmbedder(seed=cfg.seed)
        self.templates = templates or PromptTemplates.load()
        self.rng = rng or random.Random(cfg.seed)
        self.trace = trace if trace is not None else []
        self.max_workers = max_workers
        self._embed_cache: dict[str, np.ndarray] = {}

    # -- phases ---------------------------------------------------------

    def initialize(self, ctx: QueryContext) -> Population:
        """Draw the initial candidates and the reference answer."""
        query_prompt = self.templates.render_query(ctx.question)
        n = self.cfg.initial_candidates
        specs = [("generate", i) for i in range(n)] + [("reference", 0)]
        jobs = [
            self._call_job(kind, query_prompt, ctx.image, sample)
            for kind, sample in specs
        ]
        try:
            replies = _fan_out(jobs, self.max_workers)
        except BackendError as exc:
            raise BackendError(f"initialization failed: {exc}") from exc
        for kind, sample in specs:
            self.trace.append({"event": "call", "kind": kind, "sample": sample})
        candidates = [
            Candidate(id=i, text=replies[i], generation=0, lineage=Lineage.initial())
            for i in range(n)
        ]
        pop = Population(candidates=candidates, reference=replies[n], question=ctx)
        for c in candidates:
            self._trace_candidate(c)
        self.trace.append({"event": "reference", "text": pop.reference})
        return pop

    def score_round(self, pop: Population) -> Population:
        """Quality-score every unscored candidate; refresh novelty for all.

        Quality is model-judged once per candidate. Novelty depends on
        the whole current set, so it is recomputed for everyone each
        round.
        """
        if pop.size < 2:
            raise ValueError("scoring needs at least two candidates")
        if not pop.reference:
            raise ValueError("scoring needs a reference answer")
        unscored = [c for c in pop.candidates if c.quality is None]
        jobs = [self._score_job(pop, c) for c in unscored]
        results = _fan_out(jobs, self.max_workers)
        for candidate, (quality, attempts) in zip(unscored, results):
            candidate.quality = quality
            for attempt in range(attempts):
                self.trace.append({"event": "call", "kind": "score", "sample": attempt})
        embeddings = self._embed_all(pop.texts())
        for candidate, novelty in zip(pop.candidates, novelty_scores(pop.texts(), embeddings)):
            candidate.novelty = novelty
            self.trace.append(
                {"event": "scores", "id": candidate.id,
                 "quality": candidate.quality, "novelty": candidate.novelty}
            )
        return pop

    def breed(
        self, pop: Population, parents: Sequence[Candidate], generation: int
    ) -> Population:
        """Append crossover and mutation offspring; the population doubles.

        The offspring budget equals the current population size, split
        crossover:mutation at the configured ratio. Crossover draws
        uniform random distinct parent pairs; mutation draws one uniform
        random parent. Pairs may repeat across offspring.
        """
        if len(parents) < 2:
            raise ValueError("crossover needs two parents")
        budget = pop.size
        n_cross, n_mut = offspring_split(budget, self.cfg.crossover_ratio)
        question = pop.question.question
        specs: list[tuple[str, Lineage, str]] = []
        for _ in range(n_cross):
            pa, pb = self.rng.sample(list(parents), 2)
            specs.append(
                ("crossover", Lineage.crossover(pa.id, pb.id),
                 self.templates.render_crossover(question, pa.text, pb.text))
            )
        for _ in range(n_mut):
            parent = self.rng.choice(list(parents))
            specs.append(
                ("mutate", Lineage.mutation(parent.id),
                 self.templates.render_mutate(question, parent.text))
            )
        jobs = [
            self._call_job(kind, prompt, pop.question.image, sample)
            for sample, (kind, _, prompt) in enumerate(specs)
        ]
        replies = _fan_out(jobs, self.max_workers)
        next_id = max(c.id for c in pop.candidates) + 1
        for sample, ((kind, lineage, _), reply) in enumerate(zip(specs, replies)):
            self.trace.append({"event": "call", "kind": kind, "sample": sample})
            child = Candidate(
                id=next_id, text=reply, generation=generation, lineage=lineage
            )
            pop.candidates.append(child)
            self._trace_candidate(child)
            next_id += 1
        return pop

    def run_search(self, ctx: QueryContext) -> Population:
        """Full loop: initialize, evolve for the configured generations,
        then score the final offspring so every candidate is ranked."""
        pop = self.initialize(ctx)
        for t in range(1, self.cfg.generations + 1):
            self.score_round(pop)
            parents = select_parents(pop.candidates, self.levels(pop), self.cfg.parents)
            self.breed(pop, parents, t)
        self.score_round(pop)
        return pop

    # -- helpers --------------------------------------------------------

    def levels(self, pop: Population) -> LevelAssignment:
        return population_levels(pop, self.cfg.level_mode)

    def _call_job(self, kind, prompt, image, sample):
        def job() -> str:
            return self.backend.complete(prompt, kind=kind, image=image, sample=sample)

        return job

    def _score_job(self, pop: Population, candidate: Candidate):
        prompt = self.templates.render_score(
            pop.question.question, pop.reference, candidate.text
        )
        image = pop.question.image

        def job() -> tuple[float, int]:
            for attempt in range(SCORE_PARSE_ATTEMPTS):
                reply = self.backend.complete(
                    prompt, kind="score", image=image, sample=attempt
                )
                try:
                    return parse_quality(reply), attempt + 1
                except ValueError:
                    continue
            logger.warning(
                "candidate %d: unscorable reply after %d attempts, quality set to 0",
                candidate.id, SCORE_PARSE_ATTEMPTS,
            )
            return 0.0, SCORE_PARSE_ATTEMPTS

        return job

    def _embed_all(self, texts: list[str]) -> list[np.ndarray]:
        missing = [t for t in dict.fromkeys(texts) if t not in self._embed_cache]
        if missing:
            for text, vector in zip(missing, self.embedder.embed_many(missing)):
                self._embed_cache[text] = vector
        return [self._embed_cache[t] for t in texts]

    def _trace_candidate(self, c: Candidate) -> None:
        self.trace.append(
            {"event": "candidate", "id": c.id, "generation": c.generation,
             "lineage": c.lineage.kind, "parents": list(c.lineage.parents),
             "text": c.text}
        )


def population_levels(pop: Population, level_mode: str = "count") -> LevelAssignment:
    """Level assignment over a fully scored population."""
    pairs = [c.score_pair() for c in pop.candidates]
    ids = [c.id for c in pop.candidates]
    if level_mode == "classical":
        return assign_levels_classical(pairs, ids)
    return assign_levels(pairs, ids)


def rank_answers(pop: Population, level_mode: str = "count") -> list[Candidate]:
    """Order the whole population: by level, then by descending quality,
    ties by ascending id. This ordering is what top-k checks index into."""
    levels = population_levels(pop, level_mode)
    return select_parents(pop.candidates, levels, pop.size)


def run_search(
    ctx: QueryContext,
    cfg: RunConfig,
    backend: ModelBackend,
    **engine_kwargs,
) -> Population:
    """Convenience wrapper: build an engine and run one search."""
    return EvolutionEngine(cfg, backend, **engine_kwargs).run_search(ctx)
