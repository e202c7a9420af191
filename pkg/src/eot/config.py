"""Run configuration: file loading, flag overrides, validation.

The config file is JSON with a ``search`` section (the hyperparameters),
a ``backend`` section (mock flag, or endpoint plus model name), and the
harness settings. Command-line flags override file values. A summary's
``config`` echo uses exactly this shape, so a previous run's summary can
be replayed as a config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backend import HttpBackend, MockBackend, ModelBackend
from .engine import RunConfig, parse_ratio
from .exceptions import ConfigError, TemplateError
from .harness import DEFAULT_K_LIST
from .prompts import PromptTemplates

DEFAULT_OUT_DIR = "eot-out"


@dataclass
class CliConfig:
    """Everything a command needs: search knobs plus operational settings."""

    search: RunConfig = field(default_factory=RunConfig)
    mock: bool = False
    endpoint: str | None = None
    model: str | None = None
    templates_dir: str | None = None
    dataset: str | None = None
    k_list: list[int] = field(default_factory=lambda: list(DEFAULT_K_LIST))
    out_dir: str = DEFAULT_OUT_DIR
    jobs: int = 1

    def make_backend(self) -> ModelBackend:
        if self.mock:
            return MockBackend(seed=self.search.seed)
        return HttpBackend(endpoint=self.endpoint, model=self.model or "default")

    def load_templates(self) -> PromptTemplates:
        return PromptTemplates.load(self.templates_dir)

    def echo(self) -> dict:
        """Config-file-shaped dict embedded in run summaries."""
        return {
            "search": {
                "initial_candidates": self.search.initial_candidates,
                "generations": self.search.generations,
                "crossover_ratio": self.search.crossover_ratio,
                "parents": self.search.parents,
                "clusters": self.search.clusters,
                "drop_clusters": self.search.drop_clusters,
                "seed": self.search.seed,
                "level_mode": self.search.level_mode,
            },
            "backend": {
                "mock": self.mock,
                "endpoint": self.endpoint,
                "model": self.model,
            },
            "templates_dir": self.templates_dir,
            "dataset": self.dataset,
            "k_list": list(self.k_list),
            "out_dir": self.out_dir,
            "jobs": self.jobs,
        }


def _read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return raw


def _merge_values(
    raw: dict,
    *,
    seed: int | None = None,
    mock: bool | None = None,
    jobs: int | None = None,
    out: str | None = None,
    dataset: str | None = None,
) -> dict:
    search = dict(raw.get("search", {}))
    backend = dict(raw.get("backend", {}))
    values = {
        "initial_candidates": search.get("initial_candidates", 3),
        "generations": search.get("generations", 2),
        "crossover_ratio": search.get("crossover_ratio", "2:1"),
        "parents": search.get("parents", 3),
        "clusters": search.get("clusters", 5),
        "drop_clusters": search.get("drop_clusters", 1),
        "seed": search.get("seed", 0),
        "level_mode": search.get("level_mode", "count"),
        "mock": bool(backend.get("mock", False)),
        "endpoint": backend.get("endpoint"),
        "model": backend.get("model"),
        "templates_dir": raw.get("templates_dir"),
        "dataset": raw.get("dataset"),
        "k_list": raw.get("k_list", list(DEFAULT_K_LIST)),
        "out_dir": raw.get("out_dir", DEFAULT_OUT_DIR),
        "jobs": raw.get("jobs", 1),
    }
    if seed is not None:
        values["seed"] = seed
    if mock:
        values["mock"] = True
    if jobs is not None:
        values["jobs"] = jobs
    if out is not None:
        values["out_dir"] = out
    if dataset is not None:
        values["dataset"] = dataset
    return values


def check_values(values: dict) -> list[str]:
    """All invariant violations in a merged value set, one string each."""
    violations: list[str] = []

    try:
        ratio = parse_ratio(values["crossover_ratio"])
    except ValueError as exc:
        violations.append(str(exc))
        ratio = None

    n = values["initial_candidates"]
    k = values["parents"]
    kappa = values["clusters"]
    m = values["drop_clusters"]
    for name in ("initial_candidates", "generations", "parents", "clusters",
                 "drop_clusters", "seed", "jobs"):
        if not isinstance(values[name], int) or isinstance(values[name], bool):
            violations.append(f"{name} must be an integer, got {values[name]!r}")
            return violations
    if n < 2:
        violations.append(f"initial_candidates must be >= 2, got {n}")
    if values["generations"] < 0:
        violations.append(f"generations must be >= 0, got {values['generations']}")
    if k < 2:
        violations.append(f"parents must be >= 2, got {k}")
    if k > n:
        violations.append(f"parents ({k}) must not exceed initial_candidates ({n})")
    if kappa < 1:
        violations.append(f"clusters must be >= 1, got {kappa}")
    if m < 0:
        violations.append(f"drop_clusters must be >= 0, got {m}")
    if m >= kappa >= 1:
        violations.append(
            f"nothing would survive: drop_clusters ({m}) must be < clusters ({kappa})"
        )
    if values["level_mode"] not in ("count", "classical"):
        violations.append(f"level_mode must be 'count' or 'classical', got {values['level_mode']!r}")
    if values["jobs"] < 1:
        violations.append(f"jobs must be >= 1, got {values['jobs']}")
    if not (isinstance(values["k_list"], list) and values["k_list"]
            and all(isinstance(x, int) and x >= 1 for x in values["k_list"])):
        violations.append(f"k_list must be a non-empty list of integers >= 1")

    has_endpoint = bool(values["endpoint"])
    if values["mock"] and has_endpoint:
        violations.append("backend.mock and backend.endpoint are mutually exclusive")
    if not values["mock"] and not has_endpoint:
        violations.append("no usable backend: set backend.mock or backend.endpoint")
    if has_endpoint and not values["model"]:
        violations.append("backend.model is required with backend.endpoint")

    _ = ratio
    return violations


def _build(values: dict) -> CliConfig:
    return CliConfig(
        search=RunConfig(
            initial_candidates=values["initial_candidates"],
            generations=values["generations"],
            crossover_ratio=parse_ratio(values["crossover_ratio"]),
            parents=values["parents"],
            clusters=values["clusters"],
            drop_clusters=values["drop_clusters"],
            seed=values["seed"],
            level_mode=values["level_mode"],
        ),
        mock=values["mock"],
        endpoint=values["endpoint"],
        model=values["model"],
        templates_dir=values["templates_dir"],
        dataset=values["dataset"],
        k_list=list(values["k_list"]),
        out_dir=values["out_dir"],
        jobs=values["jobs"],
    )


def load_cli_config(path: str | Path | None = None, **overrides) -> CliConfig:
    """Load, merge, validate; raises ConfigError listing every violation."""
    raw = _read_config_file(path) if path is not None else {}
    values = _merge_values(raw, **overrides)
    violations = check_values(values)
    if violations:
        raise ConfigError("; ".join(violations))
    return _build(values)


def validate_setup(
    path: str | Path | None = None, probe_backend: bool = True, **overrides
) -> list[str]:
    """Full validation pass for the ``validate`` command.

    Checks config invariants, template renderability, and (for non-mock
    backends) reachability with one probe call. Returns every violation.
    """
    try:
        raw = _read_config_file(path) if path is not None else {}
    except ConfigError as exc:
        return [str(exc)]
    values = _merge_values(raw, **overrides)
    violations = check_values(values)
    if violations:
        return violations

    cfg = _build(values)
    try:
        templates = cfg.load_templates()
        templates.render_query("probe")
        templates.render_score("probe", "ref", "ans")
        templates.render_crossover("probe", "a", "b")
        templates.render_mutate("probe", "a")
        templates.render_aggregate("probe", ["a"])
    except (TemplateError, OSError) as exc:
        violations.append(f"templates unusable: {exc}")

    if probe_backend and not cfg.mock:
        from .exceptions import BackendError

        try:
            cfg.make_backend().complete("connectivity probe", kind="generate")
        except BackendError as exc:
            violations.append(f"backend unreachable: {exc}")
    return violations
