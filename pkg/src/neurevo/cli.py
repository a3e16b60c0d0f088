"""Command-line entry points: evolve, eval-one, report."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .datasets import DatasetError, DatasetSpec
from .evaluate import EvalSettings, evaluate_individual
from .evolution import SeedParseError
from .expression import ExpressionError, parse_expression
from .gptree import SemType
from .pretrained import StubStore
from .primitives import build_primitive_set
from .reports import MissingArtifacts, write_reports
from .runner import CorruptCheckpoint, run_evolution


def _cmd_evolve(args) -> int:
    config = load_config(args.config)

    def progress(log):
        print(f"generation {log.generation}: evaluated={log.evaluated} "
              f"cache_hits={log.cache_hits} best_error={log.best_error:.4f} "
              f"archive={log.archive_size} wall={log.wall_seconds:.1f}s")

    state = run_evolution(config, resume_from=args.resume, progress=progress)
    print(f"done: {state.generation} generations, best error "
          f"{state.archive.best_error():.4f}, archive size {len(state.archive)}")
    if config.output_dir:
        print(f"artifacts in {config.output_dir}")
    return 0


def _cmd_eval_one(args) -> int:
    pset = build_primitive_set()
    root = parse_expression(args.expr, pset, expected=SemType.PREDICTIONS)
    dataset = DatasetSpec.parse(args.dataset).load()
    settings = EvalSettings(patience=args.patience, max_epochs=args.max_epochs)
    outcome = evaluate_individual(root, dataset, settings, args.seed,
                                  StubStore(), timeout=args.timeout)
    print(f"status: {outcome.status}")
    print(f"error_rate: {outcome.objectives.error_rate!r}")
    print(f"param_count: {int(outcome.objectives.param_count)}")
    if outcome.report is not None:
        print(f"epochs_run: {outcome.report.epochs_run}")
        print(f"best_epoch: {outcome.report.best_epoch}")
    if outcome.message:
        print(f"detail: {outcome.message}")
    return 0 if outcome.status == "ok" else 1


def _cmd_report(args) -> int:
    pareto, curve = write_reports(args.run)
    print(f"wrote {pareto}")
    print(f"wrote {curve}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurevo",
        description="Evolve preprocessing pipelines and compact neural networks "
                    "under a two-objective Pareto search.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_evolve = sub.add_parser("evolve", help="run a full evolutionary search")
    p_evolve.add_argument("--config", required=True, help="path to the run config")
    p_evolve.add_argument("--resume", default=None, help="checkpoint file to resume from")
    p_evolve.set_defaults(func=_cmd_evolve)

    p_eval = sub.add_parser("eval-one", help="train and score a single expression")
    p_eval.add_argument("--expr", required=True, help="candidate expression text")
    p_eval.add_argument("--dataset", default="blobs:n=300,seed=7",
                        help="dataset selector, e.g. blobs:n=300,seed=7")
    p_eval.add_argument("--seed", type=int, default=0, help="training seed")
    p_eval.add_argument("--max-epochs", type=int, default=30)
    p_eval.add_argument("--patience", type=int, default=5)
    p_eval.add_argument("--timeout", type=float, default=None)
    p_eval.set_defaults(func=_cmd_eval_one)

    p_report = sub.add_parser("report", help="emit pareto.json and accuracy_curve.csv")
    p_report.add_argument("--run", required=True, help="run output directory")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ExpressionError, SeedParseError,
            MissingArtifacts, CorruptCheckpoint, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
