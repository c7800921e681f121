import csv
import io

import numpy as np
import pytest

from isrm.cli import main
from isrm.grid import GlobalMap, load_map
from isrm.render import read_ppm

SMALL = ["--extent", "6", "--min-room", "2", "--max-room", "3.5", "--min-rooms", "3", "--min-labels", "2"]


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def env_file(tmp_path, capsys):
    path = tmp_path / "env.txt"
    assert main(["gen-env", "--seed", "3", "--out", str(path), *SMALL]) == 0
    capsys.readouterr()
    return path


def test_gen_env(env_file, tmp_path, capsys):
    assert main(["gen-env", "--seed", "3", "--out", str(tmp_path / "again.txt"), *SMALL]) == 0
    out = rows(capsys.readouterr().out)
    assert int(out[0]["rooms"]) >= 3
    assert (tmp_path / "again.txt").read_bytes() == env_file.read_bytes()


def test_run_episode_outputs(env_file, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["run-episode", "--env", str(env_file), "--steps", "60", "--seed", "2", "--render", "--out", str(out)])
    assert rc == 0
    printed = rows(capsys.readouterr().out)[0]
    for name in ("map.isrm", "episode.cfg", "trajectory.csv", "metrics.csv", "map.ppm"):
        assert (out / name).exists()
    saved = rows((out / "metrics.csv").read_text())[0]
    assert saved == printed
    assert float(saved["mask_acc"]) >= float(saved["ovr_acc"])
    assert len((out / "trajectory.csv").read_text().splitlines()) == int(saved["steps"]) + 1
    m = load_map(out / "map.isrm", GlobalMap)
    assert read_ppm(out / "map.ppm").shape[:2] == m.shape


def test_run_episode_is_bit_identical(env_file, tmp_path, capsys):
    args = ["run-episode", "--env", str(env_file), "--steps", "80", "--seed", "7", "--noise", "on",
            "--confusion-diag", "0.7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("map.isrm", "metrics.csv", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_overrides(env_file, tmp_path, capsys):
    cfg = tmp_path / "ep.cfg"
    cfg.write_text("mode=repeated\nfusion=bayes\nmax_steps=10\n")
    assert main(["run-episode", "--env", str(env_file), "--config", str(cfg), "--steps", "12",
                 "--out", str(tmp_path / "r")]) == 0
    text = (tmp_path / "r" / "episode.cfg").read_text()
    assert "mode=repeated" in text and "fusion=bayes" in text and "max_steps=12" in text


def test_evaluate_reproduces_run_metrics(env_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["run-episode", "--env", str(env_file), "--steps", "40", "--out", str(out)])
    capsys.readouterr()
    assert main(["evaluate", "--env", str(env_file), "--map", str(out / "map.isrm")]) == 0
    ev = rows(capsys.readouterr().out)[0]
    run = rows((out / "metrics.csv").read_text())[0]
    for key in ("mask_acc", "ovr_acc", "mean_iou"):
        assert ev[key] == run[key]
    assert "iou_13" in ev


def test_render_env(env_file, tmp_path):
    assert main(["render", "--env", str(env_file), "--out", str(tmp_path / "gt.ppm")]) == 0
    assert (tmp_path / "gt.ppm").read_bytes()[:2] == b"P6"


def test_dataset_and_training(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["extract-dataset", "--num-envs", "2", "--steps", "20", "--dim", "8", "--out", str(data),
                 *SMALL]) == 0
    counts = {r["split"]: int(r["samples"]) for r in rows(capsys.readouterr().out)}
    assert counts["train"] > 0 and counts["val"] > 0
    model = tmp_path / "model"
    assert main(["train-classifier", "--train", str(data / "train.feat"), "--val", str(data / "val.feat"),
                 "--prototypes", str(data / "prototypes.npy"), "--loss", "infonce", "--epochs", "2",
                 "--out", str(model)]) == 0
    hist = rows(capsys.readouterr().out)
    assert [r["epoch"] for r in hist] == ["0", "1"]
    assert np.load(model / "projection.npy").shape == (8, 8)


def test_bench_small(capsys):
    assert main(["bench", "--num-envs", "1", "--steps", "30", "--variant", "spatial-avg", "repeated-avg"]) == 0
    out = rows(capsys.readouterr().out)
    assert [r["variant"] for r in out] == ["repeated-avg", "spatial-avg"]


def test_missing_file_error_line(tmp_path, capsys):
    rc = main(["evaluate", "--env", str(tmp_path / "nope.txt"), "--map", "x"])
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert rc == 1
    kind = err.split(",")[1]
    assert err.startswith("error,") and kind == "FileNotFoundError"


def test_corrupt_map_error_line(env_file, tmp_path, capsys):
    bad = tmp_path / "bad.isrm"
    bad.write_bytes(b"garbage")
    assert main(["evaluate", "--env", str(env_file), "--map", str(bad)]) == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("error,MapFormatError,")


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["run-episode"])
    assert exc.value.code == 2


def test_module_entry_point(env_file, tmp_path):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "isrm", "render", "--env", str(env_file), "--out",
                          str(tmp_path / "x.ppm")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
