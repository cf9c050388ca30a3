"""
Experiment Service
Runs one experiment end to end: space, split, data, training, evaluation, artifacts
"""

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional

from mfsb.config import settings
from mfsb.core.checkpoint import load_checkpoint
from mfsb.core.composition import CompositionSpace, Split, generate_space, make_split
from mfsb.core.model import CompositionModel
from mfsb.core.synth import Dataset, GeneratorSpec, build_generator, materialize_dataset
from mfsb.core.trainer import fit
from mfsb.db.run_ledger import RunLedger
from mfsb.models.config import ExperimentConfig, config_hash, format_config, parse_config, with_world
from mfsb.models.report import EvalReport, TrainHistory
from mfsb.services.evaluation_service import EvaluationService
from mfsb.services.export_service import export_service
from mfsb.utils.errors import ExperimentError
from mfsb.utils.logger import app_logger, log_error, log_run
from mfsb.utils.seeding import stream_seed

RUN_ARTIFACTS = ("config.txt", "losses.csv", "report.csv", "model.ckpt")


@contextmanager
def stage(name: str, run_hash: str) -> Iterator[None]:
    """Re-raise any failure inside the block as ExperimentError naming the stage"""
    try:
        yield
    except ExperimentError:
        raise
    except Exception as e:
        app_logger.error("experiment_stage_failed", stage=name, config_hash=run_hash, error=str(e))
        raise ExperimentError(f"Stage '{name}' failed: {e}", stage=name, cause=e) from e


@dataclass
class ExperimentData:
    """Everything an experiment derives from its config before training"""
    space: CompositionSpace
    split: Split
    generator: GeneratorSpec
    dataset: Dataset


@dataclass
class ExperimentResult:
    config_hash: str
    reports: List[EvalReport]
    run_dir: Optional[Path] = None
    history: TrainHistory = field(default_factory=TrainHistory)
    cache_hit: bool = False
    model: Optional[CompositionModel] = None


def prepare_data(config: ExperimentConfig) -> ExperimentData:
    """Space, split, generator and samples, each from its own seed stream"""
    run_hash = config_hash(config)
    sc = config.space
    with stage("space", run_hash):
        space = generate_space(sc.n_states, sc.n_objects, config.seed)
    with stage("split", run_hash):
        split = make_split(
            space,
            sc.unseen_fraction,
            sc.samples_per_pair,
            stream_seed(config.seed, "split"),
            eval_samples_per_pair=sc.eval_samples_per_pair,
        )
    with stage("data", run_hash):
        generator = build_generator(space, sc.d_in, stream_seed(config.seed, "generator"), sc.noise_sigma)
        dataset = materialize_dataset(space, split, generator, sc.noise_sigma, stream_seed(config.seed, "noise"))
    return ExperimentData(space, split, generator, dataset)


class ExperimentService:
    """Service for running experiments into content-addressed run directories"""

    def __init__(
        self,
        out_dir: Optional[Path] = None,
        ledger: Optional[RunLedger] = None,
        evaluator: Optional[EvaluationService] = None,
    ):
        self.out_dir = Path(out_dir) if out_dir is not None else settings.out_path
        self._ledger = ledger
        self.evaluator = evaluator or EvaluationService()

    @property
    def ledger(self) -> RunLedger:
        if self._ledger is None:
            self._ledger = RunLedger(settings.ledger_path(self.out_dir))
        return self._ledger

    def run_dir(self, config: ExperimentConfig) -> Path:
        return self.out_dir / config_hash(config)

    def _check_run_dir(self, run_dir: Path, echo: str) -> bool:
        """
        True when ``run_dir`` already holds this config's complete run

        Raises:
            ExperimentError: the directory holds a different config
        """
        config_file = run_dir / "config.txt"
        if not config_file.exists():
            return False
        if config_file.read_text(encoding="utf-8") != echo:
            raise ExperimentError(
                f"Run directory {run_dir} holds a different config; refusing to overwrite",
                stage="persist",
            )
        return all((run_dir / name).exists() for name in RUN_ARTIFACTS)

    def evaluate_worlds(
        self,
        model: CompositionModel,
        data: ExperimentData,
        method: str,
        phase: str = "test",
    ) -> List[EvalReport]:
        return [
            self.evaluator.evaluate(model, data.dataset, data.split, world, phase=phase, method=method)
            for world in model.config.eval.worlds
        ]

    def load_model(self, config: ExperimentConfig, space: CompositionSpace, checkpoint: Path) -> CompositionModel:
        """Rebuild a model from its config and restore trained tensors"""
        model = CompositionModel.build(space, config)
        expected = {name: t.shape for name, t in model.trainable_parameters().items()}
        _, tensors = load_checkpoint(checkpoint, expected_hash=config_hash(config), expected_shapes=expected)
        model.load_state_dict(tensors)
        return model

    def run_experiment(
        self,
        config: ExperimentConfig,
        method: Optional[str] = None,
        force: bool = False,
        persist: bool = True,
    ) -> ExperimentResult:
        """
        Generate data, train, evaluate in the configured world(s), write artifacts

        A run directory that already holds this config is a cache hit: training
        is skipped and the stored checkpoint is re-evaluated.

        Args:
            config: Experiment configuration
            method: Row label for reports (defaults to the config's own label)
            force: Retrain even when the run directory is complete
            persist: Write the run directory (False keeps everything in memory)

        Returns:
            ExperimentResult

        Raises:
            ExperimentError: any stage failure, with details.stage naming it
        """
        run_hash = config_hash(config)
        method = method or config.method_label()
        run_dir = self.run_dir(config) if persist else None
        echo = format_config(config)
        started = time.perf_counter()

        try:
            cached = False
            if run_dir is not None:
                with stage("persist", run_hash):
                    cached = self._check_run_dir(run_dir, echo) and not force

            data = prepare_data(config)

            history = TrainHistory()
            if cached:
                with stage("load", run_hash):
                    model = self.load_model(config, data.space, run_dir / "model.ckpt")
                app_logger.info("run_cached", config_hash=run_hash, run_dir=str(run_dir))
            else:
                with stage("build", run_hash):
                    model = CompositionModel.build(data.space, config)
                with stage("fit", run_hash):
                    validate = self.evaluator.validator(data.dataset, data.split, config.eval.worlds[0])
                    checkpoint = run_dir / "model.ckpt" if run_dir is not None else None
                    if run_dir is not None:
                        run_dir.mkdir(parents=True, exist_ok=True)
                    history = fit(model, data.dataset, data.split, checkpoint, validate).history

            with stage("evaluate", run_hash):
                reports = self.evaluate_worlds(model, data, method)

            if run_dir is not None and not cached:
                with stage("persist", run_hash):
                    self._write_artifacts(run_dir, echo, history, reports)

        except ExperimentError as e:
            duration_ms = int((time.perf_counter() - started) * 1000)
            log_error(app_logger, "ExperimentError", str(e), stage=e.stage, config_hash=run_hash)
            self.ledger.record_run(
                run_hash, "error", method=method, seed=config.seed,
                duration_ms=duration_ms, error=str(e),
            )
            raise

        duration_ms = int((time.perf_counter() - started) * 1000)
        for report in reports:
            self.ledger.record_run(
                run_hash, "success", method=method, seed=config.seed, report=report,
                duration_ms=duration_ms, cache_hit=cached,
            )
        log_run(
            app_logger, run_hash, "success",
            cache_hit=cached,
            worlds=[r.world for r in reports],
            duration_ms=duration_ms,
        )
        return ExperimentResult(
            config_hash=run_hash,
            reports=reports,
            run_dir=run_dir,
            history=history,
            cache_hit=cached,
            model=model,
        )

    def _write_artifacts(self, run_dir: Path, echo: str, history: TrainHistory, reports: List[EvalReport]) -> None:
        run_dir.mkdir(parents=True, exist_ok=True)
        history.to_frame().to_csv(run_dir / "losses.csv", index=False, lineterminator="\n")
        (run_dir / "report.csv").write_text(export_service.reports_to_csv(reports), encoding="utf-8")
        # config echo last: its presence marks a complete run
        (run_dir / "config.txt").write_text(echo, encoding="utf-8")

    def score_run(self, run_dir: Path, world: Optional[str] = None, phase: str = "test") -> List[EvalReport]:
        """
        Re-evaluate a stored run from its config echo and checkpoint

        Raises:
            ExperimentError: missing files, or a checkpoint that does not match
        """
        run_dir = Path(run_dir)
        run_hash = run_dir.name
        with stage("load", run_hash):
            config = parse_config(run_dir / "config.txt")
            data = prepare_data(config)
            model = self.load_model(config, data.space, run_dir / "model.ckpt")
            if world is not None:
                config = with_world(config, world)
                model.config = config
        with stage("evaluate", run_hash):
            return self.evaluate_worlds(model, data, config.method_label(), phase=phase)
