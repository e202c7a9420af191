"""Dataset evaluation: boxed-answer checking, Pass@k, batch orchestration.

A dataset is JSON lines, one record per line with fields ``id``,
``question``, ``answer`` (ground truth), and optionally ``image`` (a
path relative to the dataset file, loaded lazily). Each question runs
the full pipeline (search, ranking, condensation, aggregation); outputs
are a results JSONL plus a summary JSON, both schema-tagged
``eot-results/1``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

from .backend import MockBackend, ModelBackend
from .boxed import extract_boxed
from .condense import CondensedSet, aggregate, condense
from .embedding import EmbeddingProvider, HashedTrigramEmbedder
from .engine import (
    Candidate,
    EvolutionEngine,
    Population,
    QueryContext,
    RunConfig,
    rank_answers,
)
from .exceptions import EotError
from .prompts import PromptTemplates

logger = logging.getLogger(__name__)

SCHEMA = "eot-results/1"

DEFAULT_K_LIST = (1, 4, 8)

_MEDIA_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
    ".webp": "image/webp",
}


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (reproducible across runs)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# -- answer matching ----------------------------------------------------


def _normalize(text: str) -> str:
    collapsed = re.sub(r"\s+", " ", text.strip())
    if collapsed.endswith("."):
        collapsed = collapsed[:-1].rstrip()
    return collapsed


def _as_number(text: str) -> Decimal | None:
    try:
        return Decimal(text)
    except InvalidOperation:
        return None


def answers_match(extracted: str, truth: str) -> bool:
    """Exact match after light normalization.

    Whitespace is collapsed, one trailing period dropped, and numerals
    compared numerically so "3.0" matches "3".
    """
    a, b = _normalize(extracted), _normalize(truth)
    if a == b:
        return True
    na, nb = _as_number(a), _as_number(b)
    return na is not None and nb is not None and na == nb


def pass_at_k(ranked: Sequence[str | None], truth: str, k: int) -> int:
    """1 if any of the first k ranked answers matches the truth, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(
        any(a is not None and answers_match(a, truth) for a in ranked[:k])
    )


# -- dataset ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    question: str
    ground_truth: str
    image_ref: str | None = None


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    """Parse a JSONL dataset, failing loudly with the offending line number."""
    path = Path(path)
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EotError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            for key in ("id", "question", "answer"):
                if key not in raw:
                    raise EotError(f"{path}: line {lineno}: missing field {key!r}")
            record = DatasetRecord(
                id=str(raw["id"]),
                question=str(raw["question"]),
                ground_truth=str(raw["answer"]),
                image_ref=raw.get("image"),
            )
            if not record.ground_truth:
                raise EotError(f"{path}: line {lineno}: empty ground truth")
            if record.id in seen:
                raise EotError(f"{path}: line {lineno}: duplicate id {record.id!r}")
            seen.add(record.id)
            records.append(record)
    if not records:
        raise EotError(f"{path}: dataset is empty")
    return records


def record_context(record: DatasetRecord, base_dir: Path | None = None) -> QueryContext:
    """Build the query context, loading the image payload if referenced."""
    image_bytes = None
    media = None
    if record.image_ref:
        image_path = Path(record.image_ref)
        if base_dir is not None and not image_path.is_absolute():
            image_path = base_dir / image_path
        image_bytes = image_path.read_bytes()
        media = _MEDIA_TYPES.get(image_path.suffix.lower(), "application/octet-stream")
    return QueryContext(
        question=record.question,
        image_bytes=image_bytes,
        image_media_type=media,
        ground_truth=record.ground_truth,
    )


# -- single-question pipeline -------------------------------------------


@dataclass
class SolveOutcome:
    population: Population
    ranked: list[Candidate]
    condensed: CondensedSet
    final_answer: str


def solve_question(
    ctx: QueryContext,
    cfg: RunConfig,
    backend: ModelBackend,
    *,
    embedder: EmbeddingProvider | None = None,
    templates: PromptTemplates | None = None,
    seed: int | None = None,
    trace: list | None = None,
    max_workers: int = 1,
) -> SolveOutcome:
    """Full pipeline for one question: search, rank, condense, aggregate."""
    seed = cfg.seed if seed is None else seed
    engine = EvolutionEngine(
        cfg,
        backend,
        embedder=embedder,
        templates=templates,
        rng=random.Random(seed),
        trace=trace,
        max_workers=max_workers,
    )
    pop = engine.run_search(ctx)
    ranked = rank_answers(pop, cfg.level_mode)

    kappa = min(cfg.clusters, pop.size)
    m = min(cfg.drop_clusters, kappa - 1)
    if (kappa, m) != (cfg.clusters, cfg.drop_clusters):
        logger.warning(
            "population of %d cannot fill %d clusters; using kappa=%d, m=%d",
            pop.size, cfg.clusters, kappa, m,
        )
    condensed = condense(
        pop, kappa, m, rng=random.Random(derive_seed(seed, "condense")),
        embedder=engine.embedder,
    )
    final = aggregate(ctx, condensed, pop, backend, templates=engine.templates)
    engine.trace.append({"event": "call", "kind": "aggregate", "sample": 0})
    engine.trace.append(
        {"event": "final", "medoids": list(condensed.medoids), "text": final}
    )
    return SolveOutcome(
        population=pop, ranked=ranked, condensed=condensed, final_answer=final
    )


# -- batch evaluation ----------------------------------------------------


@dataclass
class EvalResult:
    """Per-question outcome of a dataset run."""

    question_id: str
    ranked_answers: list[str | None] = field(default_factory=list)
    pass_at: dict[int, int] = field(default_factory=dict)
    final_answer: str = ""
    final_correct: int = 0
    call_count: int = 0
    search_calls: int = 0
    wall_time: float = 0.0
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "id": self.question_id,
            "ranked_answers": self.ranked_answers,
            "pass_at": {str(k): v for k, v in self.pass_at.items()},
            "final_answer": self.final_answer,
            "final_correct": self.final_correct,
            "call_count": self.call_count,
            "search_calls": self.search_calls,
            "wall_time": self.wall_time,
            "error": self.error,
        }


def _evaluate_one(
    record: DatasetRecord,
    cfg: RunConfig,
    backend: ModelBackend,
    k_list: Sequence[int],
    embedder: EmbeddingProvider | None,
    templates: PromptTemplates | None,
    base_dir: Path | None,
    deterministic: bool,
    max_workers: int,
) -> EvalResult:
    child = backend.child(derive_seed(cfg.seed, "backend", record.id))
    started = time.perf_counter()
    try:
        ctx = record_context(record, base_dir)
        outcome = solve_question(
            ctx,
            cfg,
            child,
            embedder=embedder,
            templates=templates,
            seed=derive_seed(cfg.seed, "question", record.id),
            max_workers=max_workers,
        )
    except (EotError, OSError, ValueError) as exc:
        logger.warning("question %s failed: %s", record.id, exc)
        return EvalResult(
            question_id=record.id,
            call_count=child.ledger.total(),
            search_calls=child.ledger.search_calls(),
            wall_time=0.0 if deterministic else time.perf_counter() - started,
            error=str(exc),
        )
    extracted = [extract_boxed(c.text) for c in outcome.ranked]
    final_extracted = extract_boxed(outcome.final_answer)
    return EvalResult(
        question_id=record.id,
        ranked_answers=extracted,
        pass_at={k: pass_at_k(extracted, record.ground_truth, k) for k in k_list},
        final_answer=outcome.final_answer,
        final_correct=int(
            final_extracted is not None
            and answers_match(final_extracted, record.ground_truth)
        ),
        call_count=child.ledger.total(),
        search_calls=child.ledger.search_calls(),
        wall_time=0.0 if deterministic else time.perf_counter() - started,
    )


def run_dataset(
    dataset: Sequence[DatasetRecord],
    cfg: RunConfig,
    backend: ModelBackend,
    *,
    k_list: Sequence[int] = DEFAULT_K_LIST,
    embedder: EmbeddingProvider | None = None,
    templates: PromptTemplates | None = None,
    base_dir: Path | None = None,
    jobs: int = 1,
    deterministic_timing: bool | None = None,
    config_echo: dict | None = None,
) -> tuple[list[EvalResult], dict]:
    """Evaluate every record; emit per-question results plus a summary.

    Questions are independent and may run concurrently (``jobs``); the
    result order always follows dataset order. Per-question failures are
    recorded and skipped; the run is marked failed when at least half
    the questions fail. With the mock backend timing fields are zeroed
    so repeat runs are byte-identical.
    """
    if not dataset:
        raise ValueError("dataset must not be empty")
    deterministic = (
        isinstance(backend, MockBackend)
        if deterministic_timing is None
        else deterministic_timing
    )
    shared_embedder = embedder or HashedTrigramEmbedder(seed=cfg.seed)
    started_stamp = None if deterministic else _utc_now()

    def work(record: DatasetRecord) -> EvalResult:
        return _evaluate_one(
            record, cfg, backend, list(k_list), shared_embedder,
            templates, base_dir, deterministic, max_workers=1,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, dataset))
    else:
        results = [work(record) for record in dataset]

    evaluated = [r for r in results if r.error is None]
    failed = [r for r in results if r.error is not None]
    status = "failed" if len(failed) * 2 >= len(results) else "ok"
    metrics: dict = {
        "n_questions": len(results),
        "n_failed": len(failed),
        "pass_at": {
            str(k): (
                sum(r.pass_at[k] for r in evaluated) / len(evaluated)
                if evaluated
                else 0.0
            )
            for k in k_list
        },
        "final_accuracy": (
            sum(r.final_correct for r in evaluated) / len(evaluated)
            if evaluated
            else 0.0
        ),
        "total_model_calls": sum(r.call_count for r in results),
        "search_calls": sum(r.search_calls for r in results),
        "mean_time_per_answer": (
            sum(r.wall_time for r in evaluated)
            / max(sum(len(r.ranked_answers) for r in evaluated), 1)
        ),
    }
    summary = {
        "schema": SCHEMA,
        "status": status,
        "seed": cfg.seed,
        "k_list": list(k_list),
        "config": config_echo if config_echo is not None else run_config_dict(cfg),
        "metrics": metrics,
        "failed_ids": [r.question_id for r in failed],
        "started_at": started_stamp,
        "finished_at": None if deterministic else _utc_now(),
    }
    return results, summary


def run_config_dict(cfg: RunConfig) -> dict:
    """Plain-dict echo of the search hyperparameters."""
    return {
        "initial_candidates": cfg.initial_candidates,
        "generations": cfg.generations,
        "crossover_ratio": cfg.crossover_ratio,
        "parents": cfg.parents,
        "clusters": cfg.clusters,
        "drop_clusters": cfg.drop_clusters,
        "seed": cfg.seed,
        "level_mode": cfg.level_mode,
    }


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def write_outputs(
    results: Sequence[EvalResult], summary: dict, out_dir: str | Path
) -> tuple[Path, Path]:
    """Write results.jsonl and summary.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.jsonl"
    summary_path = out / "summary.json"
    with results_path.open("w", encoding="utf-8") as handle:
        for result in results:
            handle.write(json.dumps(result.to_json_dict(), sort_keys=True) + "\n")
    summary_path.write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return results_path, summary_path
