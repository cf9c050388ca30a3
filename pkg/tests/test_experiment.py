import pytest

from mfsb.core.prompts import Element
from mfsb.db.run_ledger import RunLedger
from mfsb.models.config import ORDER_LABELS, config_hash
from mfsb.services.ablation_service import AblationService, seed_list, suite_variants
from mfsb.services.experiment_service import RUN_ARTIFACTS, ExperimentService
from mfsb.services.export_service import export_service
from mfsb.utils.errors import ConfigError, ExperimentError, SplitError


def dumps(reports):
    return [r.model_dump() for r in reports]


class TestRunExperiment:
    def test_writes_run_directory(self, experiments, config):
        result = experiments.run_experiment(config)
        assert result.run_dir.name == config_hash(config)
        assert all((result.run_dir / name).exists() for name in RUN_ARTIFACTS)
        assert [r.world for r in result.reports] == ["open", "closed"]
        assert result.reports[0].method == config.method_label()

    def test_artifact_contents(self, experiments, config):
        result = experiments.run_experiment(config)
        losses = (result.run_dir / "losses.csv").read_text().splitlines()
        assert losses[0].startswith("step,") and losses[0].endswith(",total")
        assert len(losses) == 1 + len(result.history.steps)
        tables = export_service.parse_results_csv((result.run_dir / "report.csv").read_text())
        assert [t.world for t in tables] == ["open", "closed"]

    def test_second_run_is_cache_hit(self, experiments, config):
        first = experiments.run_experiment(config)
        report_csv = (first.run_dir / "report.csv").read_bytes()
        second = experiments.run_experiment(config)
        assert not first.cache_hit and second.cache_hit
        assert second.history.steps == []
        assert dumps(second.reports) == dumps(first.reports)
        assert (second.run_dir / "report.csv").read_bytes() == report_csv
        assert experiments.ledger.run_statistics()["cache_hits"] == 2

    def test_force_retrains_identically(self, experiments, config):
        first = experiments.run_experiment(config)
        forced = experiments.run_experiment(config, force=True)
        assert not forced.cache_hit
        assert forced.history.totals == first.history.totals
        assert dumps(forced.reports) == dumps(first.reports)

    def test_in_memory_run(self, experiments, config):
        result = experiments.run_experiment(config, persist=False)
        assert result.run_dir is None
        assert not experiments.run_dir(config).exists()

    def test_refuses_foreign_run_directory(self, experiments, config):
        run_dir = experiments.run_dir(config)
        run_dir.mkdir(parents=True)
        (run_dir / "config.txt").write_text("seed = 99\n")
        with pytest.raises(ExperimentError) as info:
            experiments.run_experiment(config)
        assert info.value.stage == "persist"

    def test_failure_names_stage(self, experiments, make_config):
        config = make_config(n_states=2, n_objects=2, unseen_fraction=0.74)
        with pytest.raises(ExperimentError) as info:
            experiments.run_experiment(config)
        assert info.value.stage == "split"
        assert isinstance(info.value.cause, SplitError)
        (row,) = experiments.ledger.recent_runs()
        assert row["status"] == "error"

    def test_seed_changes_results(self, experiments, make_config):
        a = experiments.run_experiment(make_config(seed=0), persist=False)
        b = experiments.run_experiment(make_config(seed=1), persist=False)
        assert a.config_hash != b.config_hash
        assert a.history.totals != b.history.totals


class TestScoreRun:
    def test_matches_run(self, experiments, config):
        result = experiments.run_experiment(config)
        assert dumps(experiments.score_run(result.run_dir)) == dumps(result.reports)

    def test_world_override(self, experiments, config):
        result = experiments.run_experiment(config)
        (report,) = experiments.score_run(result.run_dir, world="closed")
        assert report.world == "closed"
        assert report.model_dump() == result.reports[1].model_dump()

    def test_missing_checkpoint(self, experiments, config):
        result = experiments.run_experiment(config)
        (result.run_dir / "model.ckpt").unlink()
        with pytest.raises(ExperimentError) as info:
            experiments.score_run(result.run_dir)
        assert info.value.stage == "load"


class TestSuites:
    @pytest.mark.parametrize("suite,rows", [("prompt_forms", 27), ("components", 7), ("fusion", 5)])
    def test_row_counts(self, config, suite, rows):
        variants = suite_variants(suite, config)
        assert len(variants) == rows
        assert len({config_hash(c) for _, c in variants}) == rows

    def test_prompt_form_labels(self, config):
        labels = [label for label, _ in suite_variants("prompt_forms", config)]
        assert labels[0] == "Hard+Soft {Pair}, Hard {Obj}, Hard {Attr}"
        assert labels[-1] == "Soft {Pair}, Hard+Soft {Obj}, Hard+Soft {Attr}"

    def test_fusion_labels(self, config):
        assert [label for label, _ in suite_variants("fusion", config)] == list(ORDER_LABELS.values())

    def test_components(self, config):
        elements = dict(suite_variants("components", config))
        assert elements["Object + State"].elements == (Element.ATTR, Element.OBJ)
        assert elements["Pair"].elements == (Element.PAIR,)

    def test_variants_keep_base_settings(self, make_config):
        base = make_config(seed=4, epochs=2)
        for _, variant in suite_variants("fusion", base):
            assert (variant.seed, variant.training.epochs) == (4, 2)

    def test_unknown_suite(self, config):
        with pytest.raises(ConfigError):
            suite_variants("heads", config)

    def test_seed_list(self, make_config):
        base = make_config(seed=3)
        assert seed_list(base, 3) == [3, 4, 5]
        assert seed_list(base, [9, 1]) == [9, 1]
        with pytest.raises(ConfigError):
            seed_list(base, 0)
        with pytest.raises(ConfigError):
            seed_list(base, [])


class TestAblation:
    def test_fusion_suite(self, experiments, make_config):
        base = make_config(world="open")
        tables = AblationService(experiments).run_ablation_suite("fusion", base, seeds=2, persist=False)
        assert list(tables) == ["open"]
        table = tables["open"]
        assert [row.method for row in table.rows] == list(ORDER_LABELS.values())
        assert all(len(rows) == 2 for rows in table.per_seed.values())
        for row in table.rows:
            seeds = table.per_seed[row.method]
            assert row.hm == pytest.approx(sum(r.hm for r in seeds) / 2)


def test_runs_are_byte_identical(tmp_path, config):
    dirs = []
    for name in ("a", "b"):
        service = ExperimentService(out_dir=tmp_path / name, ledger=RunLedger(tmp_path / name / "ledger.db"))
        dirs.append(service.run_experiment(config).run_dir)
    for artifact in RUN_ARTIFACTS:
        assert (dirs[0] / artifact).read_bytes() == (dirs[1] / artifact).read_bytes()
