"""
Experiment driver.

Usage:
    python -m mfsb run --config configs/best.cfg
    python -m mfsb ablate --suite fusion --seeds 5 --world open
    python -m mfsb score --run-dir runs/<config_hash>
    python -m mfsb gen-data --config configs/best.cfg --out data/train.tsv
    python -m mfsb history --limit 20
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from mfsb.config import settings
from mfsb.core.composition import candidate_set, write_manifest
from mfsb.core.synth import oracle_accuracy, write_dataset
from mfsb.db.run_ledger import RunLedger
from mfsb.models.config import ExperimentConfig, format_config, parse_config, with_world
from mfsb.models.report import EvalReport, ResultsRow, ResultsTable
from mfsb.services.ablation_service import SUITES, AblationService
from mfsb.services.experiment_service import ExperimentService, prepare_data
from mfsb.services.export_service import export_service
from mfsb.utils.errors import is_config_error
from mfsb.utils.logger import app_logger, log_error, setup_logging

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ConfigArgumentParser(argparse.ArgumentParser):
    """Usage errors (unknown suite, world or format) are config errors"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = ConfigArgumentParser(
        prog="mfsb",
        description="Separated inter/intra-modal fusion prompting experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output(p, world_default=None):
        p.add_argument('--out', type=Path, default=None, help='Output root (default: $MFSB_OUT_DIR)')
        p.add_argument(
            '--world',
            choices=['open', 'closed', 'both'],
            default=world_default,
            help='Evaluation world (default: from config)'
        )
        p.add_argument('--format', choices=['csv', 'markdown'], default='markdown', help='Table format')

    run = sub.add_parser('run', help='Run one experiment')
    run.add_argument('--config', type=Path, required=True, help='Experiment config file')
    run.add_argument('--force', action='store_true', help='Retrain even if the run directory exists')
    add_output(run)

    ablate = sub.add_parser('ablate', help='Run an ablation suite')
    ablate.add_argument('--suite', choices=SUITES, required=True, help='Ablation suite')
    ablate.add_argument('--config', type=Path, default=None, help='Base config (default: built-in defaults)')
    ablate.add_argument('--seeds', type=int, default=None, help='Seeds per cell (default: $MFSB_DEFAULT_SEEDS)')
    add_output(ablate)

    score = sub.add_parser('score', help='Re-evaluate a stored run')
    score.add_argument('--run-dir', type=Path, required=True, help='Run directory')
    add_output(score)

    gen = sub.add_parser('gen-data', help='Write the synthetic dataset of a config')
    gen.add_argument('--config', type=Path, required=True, help='Experiment config file')
    gen.add_argument('--out', type=Path, required=True, help='Dataset file to write')

    history = sub.add_parser('history', help='Show recent runs from the ledger')
    history.add_argument('--out', type=Path, default=None, help='Output root holding the ledger')
    history.add_argument('--limit', type=int, default=20, help='Number of runs')

    return parser.parse_args(argv)


def load_config(path: Optional[Path], world: Optional[str]) -> ExperimentConfig:
    config = parse_config(path) if path is not None else ExperimentConfig()
    if world is not None:
        config = with_world(config, world)
    sys.stderr.write(format_config(config))
    return config


def reports_to_tables(reports: List[EvalReport]) -> List[ResultsTable]:
    tables = {}
    for report in reports:
        table = tables.setdefault(report.world, ResultsTable(world=report.world))
        table.rows.append(ResultsRow.from_report(report))
    return list(tables.values())


def print_tables(tables: List[ResultsTable], fmt: str) -> None:
    for i, table in enumerate(tables):
        if fmt == "markdown":
            print(f"{'' if i == 0 else chr(10)}World: {table.world}\n")
        text = export_service.emit_results_table(table, fmt)
        if fmt == "csv" and i > 0:
            # one CSV header for all worlds
            text = text.split("\n", 1)[1]
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.world)
    result = ExperimentService(args.out).run_experiment(config, force=args.force)
    print_tables(reports_to_tables(result.reports), args.format)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    base = load_config(args.config, args.world)
    seeds = args.seeds if args.seeds is not None else settings.DEFAULT_SEEDS
    experiments = ExperimentService(args.out)
    tables = AblationService(experiments).run_ablation_suite(args.suite, base, seeds)
    for world, table in tables.items():
        export_service.write_table(table, experiments.out_dir / f"{args.suite}_{world}.csv")
        export_service.write_per_seed(table, experiments.out_dir / f"{args.suite}_{world}_per_seed.csv")
    print_tables(list(tables.values()), args.format)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    reports = ExperimentService(args.out).score_run(args.run_dir, world=args.world)
    print_tables(reports_to_tables(reports), args.format)
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = load_config(args.config, None)
    data = prepare_data(config)
    path = write_dataset(data.dataset, data.space, args.out)
    manifest = write_manifest(data.space, data.split, args.out.with_suffix(".manifest.tsv"))
    candidates = candidate_set(data.space, data.split, "open")
    app_logger.info(
        "dataset_written",
        path=str(path),
        manifest=str(manifest),
        samples=len(data.dataset),
        oracle_test_accuracy=round(oracle_accuracy(data.dataset, data.generator, data.space, candidates), 4),
    )
    return EXIT_OK


def cmd_history(args: argparse.Namespace) -> int:
    ledger = RunLedger(settings.ledger_path(args.out))
    rows = ledger.recent_runs(args.limit)
    if not rows:
        print("No runs recorded.")
        return EXIT_OK
    columns = ["id", "timestamp", "config_hash", "method", "seed", "world", "status", "hm", "auc", "cache_hit"]
    print(pd.DataFrame(rows)[columns].to_markdown(index=False))
    stats = ledger.run_statistics()
    print(
        f"\n{stats['total_runs']} runs, {stats['successful_runs']} successful, "
        f"{stats['cache_hits']} cached, {stats['distinct_configs']} configs"
    )
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "ablate": cmd_ablate,
    "score": cmd_score,
    "gen-data": cmd_gen_data,
    "history": cmd_history,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = parse_args(argv)
    setup_logging(settings.LOG_LEVEL, settings.LOG_FILE)
    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        log_error(app_logger, type(e).__name__, str(e), command=args.command)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG if is_config_error(e) else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
