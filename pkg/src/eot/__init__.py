"""Evolutionary answer search for LLM/MLLM reasoning.

Candidate answers evolve under a two-objective search (model-judged
quality and population-relative novelty) with dominance-based selection
and prompt-driven crossover/mutation. A condensation step clusters the
final population, drops the weakest clusters, and aggregates the
surviving representatives into one answer. A harness evaluates Pass@k
and call efficiency over JSONL datasets.
"""

from .backend import CallLedger, HttpBackend, MockBackend, ModelBackend, ModelCall
from .boxed import extract_boxed
from .condense import Cluster, CondensedSet, aggregate, condense, k_medoids
from .embedding import HashedTrigramEmbedder, RemoteEmbedder
from .engine import (
    Candidate,
    EvolutionEngine,
    Lineage,
    Population,
    QueryContext,
    RunConfig,
    rank_answers,
    run_search,
)
from .exceptions import (
    BackendError,
    ConfigError,
    EmbeddingError,
    EotError,
    RequestRejected,
    TemplateError,
)
from .harness import (
    DatasetRecord,
    EvalResult,
    answers_match,
    load_dataset,
    pass_at_k,
    run_dataset,
    solve_question,
)
from .metrics import (
    DistanceMatrix,
    ca_distance_matrix,
    edit_distance,
    novelty_scores,
    parse_quality,
    semantic_pair_distance,
)
from .pareto import (
    LevelAssignment,
    ScorePair,
    assign_levels,
    assign_levels_classical,
    dominates,
    select_parents,
)
from .prompts import PromptTemplates

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "CallLedger",
    "Candidate",
    "Cluster",
    "CondensedSet",
    "ConfigError",
    "DatasetRecord",
    "DistanceMatrix",
    "EmbeddingError",
    "EotError",
    "EvalResult",
    "EvolutionEngine",
    "HashedTrigramEmbedder",
    "HttpBackend",
    "Lineage",
    "LevelAssignment",
    "MockBackend",
    "ModelBackend",
    "ModelCall",
    "Population",
    "PromptTemplates",
    "QueryContext",
    "RemoteEmbedder",
    "RequestRejected",
    "RunConfig",
    "ScorePair",
    "TemplateError",
    "aggregate",
    "answers_match",
    "assign_levels",
    "assign_levels_classical",
    "ca_distance_matrix",
    "condense",
    "dominates",
    "edit_distance",
    "extract_boxed",
    "k_medoids",
    "load_dataset",
    "novelty_scores",
    "parse_quality",
    "pass_at_k",
    "rank_answers",
    "run_dataset",
    "run_search",
    "select_parents",
    "semantic_pair_distance",
    "solve_question",
]
