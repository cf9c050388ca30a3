import pytest

from mfsb.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from mfsb.core.composition import generate_space, read_manifest
from mfsb.core.synth import read_dataset
from mfsb.models.config import config_hash, parse_config


@pytest.fixture
def config_file(tmp_path, tiny_config_text):
    path = tmp_path / "tiny.cfg"
    path.write_text(tiny_config_text, encoding="utf-8")
    return path


@pytest.fixture
def out(tmp_path):
    return tmp_path / "runs"


def test_missing_config_file(tmp_path, out, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(out)]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_bad_config_key(tmp_path, out):
    path = tmp_path / "bad.cfg"
    path.write_text("seed = 1\nwidth = 3\n", encoding="utf-8")
    assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_CONFIG


def test_runtime_failure(tmp_path, out):
    path = tmp_path / "split.cfg"
    path.write_text("n_states = 2\nn_objects = 2\nunseen_fraction = 0.74\n", encoding="utf-8")
    assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_RUNTIME


def test_run_prints_markdown(config_file, out, capsys):
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    captured = capsys.readouterr()
    assert "World: open" in captured.out and "World: closed" in captured.out
    assert "| method" in captured.out
    assert "# mfsb experiment config" in captured.err
    assert (out / config_hash(parse_config(config_file)) / "model.ckpt").exists()


def test_run_csv_single_world(config_file, out, capsys):
    args = ["run", "--config", str(config_file), "--out", str(out), "--world", "closed", "--format", "csv"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "method,world,S,U,HM,AUC"
    assert len(lines) == 2 and ",closed," in lines[1]


def test_score(config_file, out, capsys):
    main(["run", "--config", str(config_file), "--out", str(out), "--format", "csv"])
    run_output = capsys.readouterr().out
    run_dir = out / config_hash(parse_config(config_file))
    assert main(["score", "--run-dir", str(run_dir), "--out", str(out), "--format", "csv"]) == EXIT_OK
    assert capsys.readouterr().out == run_output


def test_gen_data(config_file, tmp_path):
    target = tmp_path / "data" / "train.tsv"
    assert main(["gen-data", "--config", str(config_file), "--out", str(target)]) == EXIT_OK
    space = generate_space(3, 3, seed=0)
    data = read_dataset(target, space)
    assert len(data.train) > 0 and len(data.test) > 0
    manifest = read_manifest(target.with_suffix(".manifest.tsv"))
    train_pairs = manifest[manifest["split"] == "train"]
    assert len(train_pairs) == len({s.pair for s in data.train})
    assert set(manifest["split"]) == {"train", "val", "test"}


def test_history(config_file, out, capsys):
    assert main(["history", "--out", str(out)]) == EXIT_OK
    assert "No runs recorded." in capsys.readouterr().out
    main(["run", "--config", str(config_file), "--out", str(out), "--world", "open"])
    capsys.readouterr()
    assert main(["history", "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "config_hash" in text
    assert "1 runs, 1 successful, 0 cached, 1 configs" in text


def test_ablate_writes_tables(config_file, out, capsys):
    args = ["ablate", "--suite", "fusion", "--config", str(config_file), "--seeds", "1",
            "--world", "open", "--out", str(out), "--format", "csv"]
    assert main(args) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 6
    assert (out / "fusion_open.csv").exists()
    assert (out / "fusion_open_per_seed.csv").exists()


@pytest.mark.parametrize("extra", [
    ["ablate", "--suite", "heads"],
    ["ablate", "--suite", "fusion", "--format", "html"],
    ["ablate", "--suite", "fusion", "--world", "sideways"],
])
def test_bad_choice_is_config_error(extra, out, capsys):
    with pytest.raises(SystemExit) as info:
        main(extra + ["--out", str(out)])
    assert info.value.code == EXIT_CONFIG
    assert "invalid choice" in capsys.readouterr().err
