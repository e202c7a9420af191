"""Command-line entry point.

Three commands: ``ask`` runs the full pipeline for one question and
prints the final answer, ``eval`` scores a JSONL dataset and writes
results plus a summary, ``validate`` checks the configuration without
running a search. Exit codes: 0 ok, 1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import CliConfig, load_cli_config, validate_setup
from .engine import QueryContext
from .exceptions import ConfigError, EotError
from .harness import load_dataset, run_dataset, solve_question, write_outputs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eot",
        description="Evolutionary answer search over an LLM backend.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--mock", action="store_true",
                        help="use the deterministic offline mock backend")
    common.add_argument("--jobs", type=int, help="max concurrent questions")
    common.add_argument("--out", metavar="DIR", help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    ask = sub.add_parser("ask", parents=[common],
                         help="answer one question and print the result")
    ask.add_argument("question", help="question text")
    ask.add_argument("--image", metavar="PATH", help="attach an image payload")
    ask.add_argument("--trace", metavar="PATH",
                     help="write the run trace as JSON lines")

    ev = sub.add_parser("eval", parents=[common],
                        help="evaluate a JSONL dataset and report Pass@k")
    ev.add_argument("dataset", nargs="?",
                    help="dataset JSONL (defaults to the config's dataset)")

    sub.add_parser("validate", parents=[common],
                   help="check config, templates, and backend reachability")
    return parser


def _load_config(args: argparse.Namespace) -> CliConfig:
    return load_cli_config(
        args.config,
        seed=args.seed,
        mock=args.mock or None,
        jobs=args.jobs,
        out=args.out,
        dataset=getattr(args, "dataset", None),
    )


def cmd_ask(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    ctx = QueryContext(question=args.question)
    if args.image:
        image_path = Path(args.image)
        if not image_path.is_file():
            raise ConfigError(f"image file not found: {image_path}")
        from .harness import DatasetRecord, record_context

        ctx = record_context(
            DatasetRecord(id="ask", question=args.question, ground_truth="-",
                          image_ref=str(image_path))
        )
    trace: list | None = [] if args.trace else None
    outcome = solve_question(
        ctx, cfg.search, cfg.make_backend(),
        templates=cfg.load_templates(), trace=trace,
    )
    if args.trace:
        trace_path = Path(args.trace)
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        with trace_path.open("w", encoding="utf-8") as handle:
            for event in trace or []:
                handle.write(json.dumps(event, sort_keys=True) + "\n")
    print(outcome.final_answer)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not cfg.dataset:
        raise ConfigError("no dataset given (argument or config 'dataset')")
    dataset_path = Path(cfg.dataset)
    if not dataset_path.is_file():
        raise ConfigError(f"dataset file not found: {dataset_path}")
    records = load_dataset(dataset_path)
    results, summary = run_dataset(
        records,
        cfg.search,
        cfg.make_backend(),
        k_list=cfg.k_list,
        templates=cfg.load_templates(),
        base_dir=dataset_path.parent,
        jobs=cfg.jobs,
        config_echo=cfg.echo(),
    )
    results_path, summary_path = write_outputs(results, summary, cfg.out_dir)

    metrics = summary["metrics"]
    print(f"questions: {metrics['n_questions']}  failed: {metrics['n_failed']}")
    for k in cfg.k_list:
        print(f"pass@{k}: {metrics['pass_at'][str(k)]:.4f}")
    print(f"final-answer accuracy: {metrics['final_accuracy']:.4f}")
    calls_per_question = metrics["total_model_calls"] / metrics["n_questions"]
    print(f"model calls per question: {calls_per_question:.2f}")
    print(f"mean time per answer: {metrics['mean_time_per_answer']:.4f}s")
    print(f"results: {results_path}")
    print(f"summary: {summary_path}")
    return EXIT_RUNTIME if summary["status"] == "failed" else EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    violations = validate_setup(
        args.config,
        seed=args.seed,
        mock=args.mock or None,
        jobs=args.jobs,
        out=args.out,
    )
    if violations:
        for violation in violations:
            print(f"error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


_COMMANDS = {"ask": cmd_ask, "eval": cmd_eval, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EotError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
