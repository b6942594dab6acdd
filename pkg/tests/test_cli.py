import csv

import numpy as np
import pytest

from darqn import gan as G
from darqn.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from darqn.nn import load_checkpoint

SMALL = ["--set", "agent.warmup=40", "--set", "agent.batch_size=8", "--set", "agent.anneal_steps=100"]


def rows(path):
    with open(path) as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write(path, text):
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------- train


def test_smoke_train_writes_checkpoint(tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--seed", "1", "--out", str(out), "--steps", "100", "--world", "hallway-straight",
                 *SMALL])
    assert code == EXIT_OK
    ckpts = list((out / "checkpoints").glob("*.ckpt"))
    assert len(ckpts) >= 1
    params, net, meta = load_checkpoint(out / "checkpoints" / "final.ckpt")
    assert meta["step"] == 100 and net.variant == "drqn_ta"
    assert (out / "config.yaml").exists() and (out / "train_log.csv").exists()


def test_same_seed_same_checkpoint_bytes(tmp_path):
    def run():
        out = tmp_path / "run"
        assert main(["train", "--seed", "5", "--out", str(out), "--steps", "120", "--variant", "dqn",
                     "--world", "room-scattered", *SMALL]) == EXIT_OK
        data = (out / "checkpoints" / "final.ckpt").read_bytes()
        log = (out / "train_log.csv").read_bytes()
        for p in sorted(out.rglob("*"), reverse=True):
            p.unlink() if p.is_file() else p.rmdir()
        return data, log
    assert run() == run()


def test_different_seed_different_checkpoint(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for seed, out in (("1", a), ("2", b)):
        main(["train", "--seed", seed, "--out", str(out), "--steps", "60", "--variant", "dqn", *SMALL])
    assert (a / "checkpoints" / "final.ckpt").read_bytes() != (b / "checkpoints" / "final.ckpt").read_bytes()


def test_curriculum_switches_at_boundaries(tmp_path):
    cfg = write(tmp_path / "c.yaml", "variant: dqn\ncurriculum:\n  - {world: hallway-straight, steps: 150}\n"
                                     "  - {world: hallway-2-turns-45, steps: 120}\n  - {world: maze-narrow, steps: 80}\n")
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--seed", "3", "--out", str(out), *SMALL]) == EXIT_OK
    log = rows(out / "train_log.csv")
    switches = [(int(r["step"]), r["world"]) for r in log if r["event"] == "switch"]
    assert switches == [(150, "hallway-2-turns-45"), (270, "maze-narrow")]
    for r in log:
        if r["event"] == "episode":
            step = int(r["step"])
            expected = "hallway-straight" if step <= 150 else "hallway-2-turns-45" if step <= 270 else "maze-narrow"
            assert r["world"] == expected
    assert load_checkpoint(out / "checkpoints" / "final.ckpt")[2]["step"] == 350


def test_train_requires_seed(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), "--steps", "10"]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_bad_yaml_reports_line(tmp_path, capsys):
    cfg = write(tmp_path / "bad.yaml", "seed: 1\nagent:\n  gamma: [0.9\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "line" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    assert main(["train", "--seed", "1", "--out", str(tmp_path), "--set", "agent.gama=0.9"]) == EXIT_CONFIG
    assert "gama" in capsys.readouterr().err


def test_bad_world_file_reports_line(tmp_path, capsys):
    world = write(tmp_path / "w.world", "[bounds]\n0 0 10 10\n[walls]\nrect 1 1 oops 2\n")
    assert main(["train", "--seed", "1", "--out", str(tmp_path / "r"), "--world", world, "--steps", "10"]) \
        == EXIT_CONFIG
    assert ":4" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_step(tmp_path, capsys):
    code = main(["train", "--seed", "1", "--out", str(tmp_path), "--steps", "400", "--variant", "dqn", *SMALL,
                 "--set", "agent.learning_rate=1e300", "--set", "agent.optimizer=sgd"])
    assert code == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "non-finite" in err and "update" in err and "environment step" in err


# ---------------------------------------------------------------- eval

CORRIDOR = "name long\n[bounds]\n0 0 400 10\n[spawn]\nrect 5 5 5 5\nheading 0 0\n"
WALL_AHEAD = "name wall\n[bounds]\n0 0 10 10\n[walls]\nsegment 6 0 6 10\n[spawn]\nrect 5 5 5 5\nheading 0 0\n"


def test_straight_policy_hits_cap_in_open_corridor(tmp_path):
    world = write(tmp_path / "long.world", CORRIDOR)
    out = tmp_path / "ev"
    assert main(["eval", "--seed", "1", "--out", str(out), "--baseline", "straight", "--world", world,
                 "--episodes", "5"]) == EXIT_OK
    r = rows(out / "eval_straight.csv")
    assert len(r) == 5
    assert all(x["steps_until_collision"] == "1000" and x["collided"] == "0" for x in r)


def test_straight_policy_wall_one_meter_ahead(tmp_path):
    world = write(tmp_path / "wall.world", WALL_AHEAD)
    out = tmp_path / "ev"
    assert main(["eval", "--seed", "1", "--out", str(out), "--baseline", "straight", "--world", world,
                 "--episodes", "20"]) == EXIT_OK
    steps = [int(x["steps_until_collision"]) for x in rows(out / "eval_straight.csv")]
    # 0.25 m per step: 0.75 m, 0.5 m, 0.25 m < drone radius
    assert steps == [3] * 20 and np.std(steps) == 0.0
    assert "+- 0.00" in (out / "eval_straight_summary.txt").read_text()


def test_random_outlasts_straight_in_room(tmp_path):
    for b in ("random", "straight"):
        assert main(["eval", "--seed", "9", "--out", str(tmp_path), "--baseline", b,
                     "--world", "room-scattered", "--episodes", "200"]) == EXIT_OK
    mean = {b: np.mean([int(x["steps_until_collision"]) for x in rows(tmp_path / f"eval_{b}.csv")])
            for b in ("random", "straight")}
    assert mean["random"] > mean["straight"]


def test_eval_checkpoint_input_mismatch(tmp_path, capsys):
    run = tmp_path / "run"
    main(["train", "--seed", "1", "--out", str(run), "--steps", "50", *SMALL])
    code = main(["eval", "--seed", "1", "--out", str(tmp_path / "ev"), "--checkpoint",
                 str(run / "checkpoints" / "final.ckpt"), "--set", "env.n_rays=16", "--episodes", "1"])
    assert code == EXIT_CONFIG
    assert "expects observations" in capsys.readouterr().err


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--seed", "1", "--out", str(tmp_path), "--checkpoint", str(tmp_path / "none.ckpt")]) \
        == EXIT_CONFIG


def test_eval_zero_episodes_rejected(tmp_path):
    assert main(["eval", "--seed", "1", "--out", str(tmp_path), "--baseline", "random", "--episodes", "0"]) \
        == EXIT_CONFIG


def test_eval_checkpoint_with_attention(tmp_path):
    run = tmp_path / "run"
    main(["train", "--seed", "1", "--out", str(run), "--steps", "50", *SMALL])
    assert main(["eval", "--seed", "2", "--out", str(tmp_path / "ev"), "--checkpoint",
                 str(run / "checkpoints" / "final.ckpt"), "--episodes", "2", "--attention"]) == EXIT_OK
    att = rows(tmp_path / "ev" / "attention_drqn_ta.csv")
    assert att
    for r in att:
        w = [float(v) for k, v in r.items() if k.startswith("w")]
        assert len(w) == 10
        assert abs(sum(w) - 1) <= 1e-9
    assert main(["plot", "attention", str(tmp_path / "ev" / "attention_drqn_ta.csv"),
                 "--out", str(tmp_path / "p")]) == EXIT_OK
    assert "sum = 1.000000" in (tmp_path / "p" / "attention.svg").read_text()


# ---------------------------------------------------------------- gan


def test_gen_data_count(tmp_path):
    assert main(["gan", "gen-data", "--seed", "1", "--out", str(tmp_path), "--count", "100"]) == EXIT_OK
    assert len(G.load_pairs(tmp_path / "pairs.bin")) == 100


def test_gen_data_empty_rejected(tmp_path):
    assert main(["gan", "gen-data", "--seed", "1", "--out", str(tmp_path), "--count", "0"]) == EXIT_CONFIG


def test_gan_memorizes_ten_pairs(tmp_path):
    tiny = ["--set", "gan.image_size=16", "--set", "gan.augment=false", "--set", "gan.learning_rate=0.002",
            "--set", "gan.batch_size=2", "--set", "gan.heldout_fraction=0"]
    assert main(["gan", "gen-data", "--seed", "1", "--out", str(tmp_path), "--count", "10", *tiny]) == EXIT_OK
    data = str(tmp_path / "pairs.bin")
    assert main(["gan", "train", "--seed", "1", "--out", str(tmp_path), "--data", data, "--epochs", "150",
                 *tiny]) == EXIT_OK
    assert main(["gan", "eval", "--seed", "1", "--out", str(tmp_path), "--data", data,
                 "--model", str(tmp_path / "gan.ckpt")]) == EXIT_OK
    (result,) = rows(tmp_path / "gan_eval.csv")
    assert int(result["pairs"]) == 10 and float(result["L1"]) < 0.02


def test_gan_train_same_seed_same_csv(tmp_path):
    tiny = ["--set", "gan.image_size=8", "--set", "gan.gen_channels=[2,2,2]", "--set", "gan.disc_channels=[2,2]"]
    main(["gan", "gen-data", "--seed", "4", "--out", str(tmp_path), "--count", "10", *tiny])
    data = str(tmp_path / "pairs.bin")
    outs = []
    for name in ("a", "b"):
        assert main(["gan", "train", "--seed", "4", "--out", str(tmp_path / name), "--data", data,
                     "--epochs", "3", *tiny]) == EXIT_OK
        outs.append((tmp_path / name / "gan_history.csv").read_bytes())
    assert outs[0] == outs[1]
    assert len(rows(tmp_path / "a" / "gan_history.csv")) == 4


def test_gan_train_on_empty_dataset(tmp_path):
    empty = tmp_path / "e.bin"
    empty.write_bytes(b"")
    assert main(["gan", "train", "--seed", "1", "--out", str(tmp_path), "--data", str(empty)]) == EXIT_CONFIG


# ---------------------------------------------------------------- plot


def test_plot_empty_valid_csv(tmp_path):
    csv_path = write(tmp_path / "log.csv", "# darqn training log v1\nstep,epsilon,loss,episode_return,"
                                           "steps_until_collision,collided,world,event\n")
    assert main(["plot", "curves", csv_path, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "learning_curves.svg").read_text().lstrip().startswith("<?xml")


def test_plot_identical_inputs_identical_svg(tmp_path):
    run = tmp_path / "run"
    main(["train", "--seed", "1", "--out", str(run), "--steps", "200", "--variant", "dqn", *SMALL])
    copy = tmp_path / "copy.csv"
    copy.write_bytes((run / "train_log.csv").read_bytes())
    main(["plot", "curves", str(run / "train_log.csv"), "--labels", "x", "--out", str(tmp_path / "p1")])
    main(["plot", "curves", str(copy), "--labels", "x", "--out", str(tmp_path / "p2")])
    a = (tmp_path / "p1" / "learning_curves.svg").read_bytes()
    assert a == (tmp_path / "p2" / "learning_curves.svg").read_bytes()


def test_plot_malformed_csv_row_number(tmp_path, capsys):
    csv_path = write(tmp_path / "log.csv", "# darqn training log v1\nstep,steps_until_collision,event\n"
                                           "1,5,episode\n2,abc,episode\n")
    assert main(["plot", "curves", csv_path, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "row 2" in capsys.readouterr().err


def test_plot_missing_column(tmp_path, capsys):
    csv_path = write(tmp_path / "log.csv", "# darqn training log v1\nstep,event\n1,episode\n")
    assert main(["plot", "curves", csv_path, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "steps_until_collision" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["nope"], ["gan"], ["plot", "curves"]])
def test_argparse_usage_errors(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2
