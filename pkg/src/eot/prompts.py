"""Prompt templates for the five model roles.

Templates are plain text files with ``{placeholder}`` slots, editable
without touching code. Rendering is pure substitution: answer texts are
inserted verbatim, never escaped or truncated. Literal braces that are
not lowercase identifiers (such as the empty ``\\boxed{}`` in the format
instruction) pass through untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .exceptions import TemplateError

DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "templates"

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")

CANDIDATE_HEADER = "[Candidate {index}]"
CANDIDATE_FOOTER = "[End of candidates]"


def render(template: str, bindings: Mapping[str, str]) -> str:
    """Substitute every ``{name}`` placeholder from ``bindings``.

    Raises TemplateError naming the first placeholder with no binding.
    """

    def swap(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise TemplateError(f"unbound: {name}")
        return str(bindings[name])

    return _PLACEHOLDER.sub(swap, template)


def candidate_block(answers: Sequence[str]) -> str:
    """Enumerate answers into the block the aggregation template expects."""
    parts = [
        CANDIDATE_HEADER.format(index=i) + "\n" + text
        for i, text in enumerate(answers, start=1)
    ]
    return "\n\n".join(parts) + "\n\n" + CANDIDATE_FOOTER


@dataclass(frozen=True)
class PromptTemplates:
    """The five prompt templates, loaded once per run."""

    query: str
    score: str
    crossover: str
    mutate: str
    aggregate: str

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "PromptTemplates":
        base = Path(directory) if directory is not None else DEFAULT_TEMPLATE_DIR
        texts = {}
        for name in ("query", "score", "crossover", "mutate", "aggregate"):
            path = base / f"{name}.txt"
            if not path.is_file():
                raise TemplateError(f"template file not found: {path}")
            texts[name] = path.read_text(encoding="utf-8")
        return cls(**texts)

    def render_query(self, question: str) -> str:
        return render(self.query, {"question": question})

    def render_score(self, question: str, reference: str, answer: str) -> str:
        return render(
            self.score,
            {"question": question, "reference": reference, "answer": answer},
        )

    def render_crossover(self, question: str, answer_a: str, answer_b: str) -> str:
        return render(
            self.crossover,
            {"question": question, "answer_a": answer_a, "answer_b": answer_b},
        )

    def render_mutate(self, question: str, answer: str) -> str:
        return render(self.mutate, {"question": question, "answer": answer})

    def render_aggregate(self, question: str, answers: Sequence[str]) -> str:
        if not answers:
            raise ValueError("aggregate needs at least one answer")
        return render(
            self.aggregate,
            {"question": question, "answers": candidate_block(answers)},
        )
