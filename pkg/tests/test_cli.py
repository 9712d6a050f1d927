import csv

import numpy as np
import pytest

from drlsched import harness
from drlsched import policy as pol
from drlsched.cli import main
from drlsched.config import load_config
from drlsched.workload import load_jobset


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--seed", "--iterations", "--checkpoint", "--out-dir", "--resume"):
        assert flag in out


def test_unknown_flag_is_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code != 0


def test_generate(tmp_path):
    out = tmp_path / "js"
    assert main(["generate", "--num-jobsets", "3", "--out-dir", str(out), "--seed", "4"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["jobset_0000.txt", "jobset_0001.txt", "jobset_0002.txt"]
    first = [(out / n).read_text() for n in names]
    assert main(["generate", "--num-jobsets", "3", "--out-dir", str(out), "--seed", "4"]) == 0
    assert [(out / n).read_text() for n in names] == first
    for n in names:
        assert load_jobset(out / n).capacity == (10, 10)


def test_train_toy_five_iterations(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", "toy", "--iterations", "5", "--out-dir", str(out)]) == 0
    rows = read_csv(out / "metrics.csv")
    assert ",".join(rows[0]) == "iteration,mean_total_reward,mean_slowdown,mean_episode_length,wall_time"
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5"]
    assert (out / "final.ckpt").exists()
    assert (out / "checkpoint-0005.ckpt").exists()
    params, meta = pol.load_params(out / "final.ckpt")
    assert meta["iteration"] == 5
    assert "sjf" in (out / "evaluation.txt").read_text()


def test_resume_continues_csv(tmp_path):
    cfg = load_config("toy").with_iterations(6)
    out = tmp_path / "run"
    harness.cmd_train(cfg, str(out), stop_iteration=3, log=lambda *_: None)
    # simulate rows written after the last checkpoint before an interruption
    with open(out / "metrics.csv", "a") as fh:
        fh.write("4,0,0,0,0\n")
    assert main(["train", "--config", "toy", "--iterations", "6", "--out-dir", str(out),
                 "--resume"]) == 0
    rows = read_csv(out / "metrics.csv")
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5", "6"]

    full = tmp_path / "full"
    harness.cmd_train(cfg, str(full), log=lambda *_: None)
    strip = lambda rows: [r[:-1] for r in rows]  # noqa: E731  wall_time differs
    assert strip(read_csv(full / "metrics.csv")) == strip(rows)
    a, _ = pol.load_params(full / "final.ckpt")
    b, _ = pol.load_params(out / "final.ckpt")
    for x, y in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


def test_train_toy_full_run_learns(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", "toy", "--out-dir", str(out)]) == 0
    rewards = [float(r[1]) for r in read_csv(out / "metrics.csv")[1:]]
    assert len(rewards) == 50
    assert np.mean(rewards[-10:]) > np.mean(rewards[:10])


def test_compare_untrained_checkpoint(tmp_path):
    cfg = load_config("toy")
    ckpt = tmp_path / "init.ckpt"
    pol.save_params(harness.initial_params(cfg), ckpt, {"iteration": 0})
    for run in ("a", "b"):
        assert main(["compare", "--config", "toy", "--checkpoint", str(ckpt),
                     "--out-dir", str(tmp_path / run)]) == 0
    table = read_csv(tmp_path / "a" / "comparison.csv")
    assert table[0] == ["scheduler", "mean_slowdown", "std_slowdown", "mean_reward", "jobs_dropped"]
    assert [r[0] for r in table[1:]] == ["drl", "sjf", "packer", "random", "uniform"]
    assert all(len(r) == 5 for r in table)
    assert table == read_csv(tmp_path / "b" / "comparison.csv")


def test_compare_shape_mismatch(tmp_path, capsys):
    cfg = load_config("toy")
    ckpt = tmp_path / "toy.ckpt"
    pol.save_params(harness.initial_params(cfg), ckpt)
    code = main(["compare", "--config", "single-machine", "--checkpoint", str(ckpt),
                 "--num-jobsets", "1", "--out-dir", str(tmp_path)])
    assert code != 0
    assert "does not match" in capsys.readouterr().err


def test_missing_config_is_error(capsys):
    assert main(["generate", "--config", "/no/such.cfg"]) != 0
    assert "not found" in capsys.readouterr().err


def test_evaluate_command(tmp_path, capsys):
    cfg = load_config("toy")
    ckpt = tmp_path / "init.ckpt"
    pol.save_params(harness.initial_params(cfg), ckpt)
    assert main(["evaluate", "--config", "toy", "--checkpoint", str(ckpt)]) == 0
    assert "mean slowdown" in capsys.readouterr().out


def test_heldout_disjoint_from_training():
    cfg = load_config("single-machine")
    held = harness.heldout_jobsets(cfg, 5)
    train = [js for it in (1, 2, 3) for js in harness.training_jobsets(cfg, it)]
    assert not any(h == t for h in held for t in train)
