"""Command-line interface: happy paths, exit codes, idempotence."""

import json

import numpy as np
import pytest

from congcn import data
from congcn.cli import main
from conftest import make_blob_dataset


@pytest.fixture(scope="module")
def dataset_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    cube, labels, manifest = make_blob_dataset(size=24, bands=5, quota=6, seed=1)
    data.save_cube(cube, root / "cube.hsit")
    data.save_labels(labels, root / "labels.hsil")
    data.save_manifest(manifest, root / "ds.manifest")
    return root


def _train_args(files, out, extra=()):
    return ["train", "--cube", str(files / "cube.hsit"),
            "--labels", str(files / "labels.hsil"),
            "--manifest", str(files / "ds.manifest"),
            "--out", str(out), "--iters", "10", "--hidden", "8",
            "--n-segments", "30", "--seed", "3", *extra]


def test_segment_writes_loadable_assignment(dataset_files, tmp_path):
    out = tmp_path / "assign.hsil"
    code = main(["segment", "--cube", str(dataset_files / "cube.hsit"),
                 "--out", str(out), "--n-segments", "16", "--seed", "1"])
    assert code == 0
    assignment = data.load_labels(out)
    assert assignment.height == 24 and assignment.width == 24
    assert assignment.labels.max() == assignment.n_classes - 1


def test_segment_missing_input_exits_2(tmp_path, capsys):
    code = main(["segment", "--cube", str(tmp_path / "nope.hsit"),
                 "--out", str(tmp_path / "x.hsil")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_segment_idempotent(dataset_files, tmp_path):
    a, b = tmp_path / "a.hsil", tmp_path / "b.hsil"
    for out in (a, b):
        assert main(["segment", "--cube", str(dataset_files / "cube.hsit"),
                     "--out", str(out), "--n-segments", "12", "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_then_eval_round_trip(dataset_files, tmp_path):
    run = tmp_path / "run"
    assert main(_train_args(dataset_files, run)) == 0
    assert (run / "checkpoint.cgcn").is_file()
    log_lines = (run / "train_log.jsonl").read_text().splitlines()
    assert len(log_lines) == 10
    first = json.loads(log_lines[0])
    assert set(first) >= {"iter", "ce", "ssc_unsup", "ssc_sup", "gen", "total"}

    assert main(["eval", "--run", str(run)]) == 0
    report = json.loads((run / "metrics.json").read_text())
    assert set(report) == {"oa", "aa", "kappa", "per_class", "n_test"}
    ppm = (run / "classmap.ppm").read_bytes()
    assert ppm.startswith(b"P6\n24 24\n255\n")
    assert len(ppm) == len(b"P6\n24 24\n255\n") + 24 * 24 * 3


def test_eval_idempotent(dataset_files, tmp_path):
    run = tmp_path / "run"
    assert main(_train_args(dataset_files, run)) == 0
    assert main(["eval", "--run", str(run), "--out", str(tmp_path / "e1")]) == 0
    assert main(["eval", "--run", str(run), "--out", str(tmp_path / "e2")]) == 0
    assert (tmp_path / "e1/metrics.json").read_bytes() == \
        (tmp_path / "e2/metrics.json").read_bytes()
    assert (tmp_path / "e1/classmap.ppm").read_bytes() == \
        (tmp_path / "e2/classmap.ppm").read_bytes()


def test_train_invalid_lambda_exits_2(dataset_files, tmp_path, capsys):
    code = main(_train_args(dataset_files, tmp_path / "r",
                            extra=["--lambda-ssc", "-0.5"]))
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_train_ablation_flags(dataset_files, tmp_path):
    run = tmp_path / "ablate"
    assert main(_train_args(dataset_files, run,
                            extra=["--no-closs", "--no-gloss"])) == 0
    record = json.loads((run / "train_log.jsonl").read_text().splitlines()[0])
    assert record["ssc_unsup"] == 0.0 and record["gen"] == 0.0
    cfg = json.loads((run / "run.json").read_text())
    assert cfg["use_contrastive"] is False and cfg["use_generative"] is False


def test_eval_missing_run_exits_2(tmp_path, capsys):
    assert main(["eval", "--run", str(tmp_path / "ghost")]) == 2
    capsys.readouterr()
