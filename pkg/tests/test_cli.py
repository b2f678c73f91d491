import json
import os

import pytest

from mapnav.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from mapnav.config import RunConfig


def tiny_config(**over):
    base = dict(ego_size=24, d=16, k=5, unet_base=8, unet_depth=3,
                n_instr_layers=1, batch_size=4, train_steps=6,
                checkpoint_every=0, num_floorplans=2, heldout_floorplans=1,
                episodes_per_floorplan=2, samples_per_episode=2,
                eval_episodes=2, budget=30, seed=0)
    base.update(over)
    return RunConfig(**base).validate()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One gen-data + train run shared by the downstream command tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    tiny_config().save(cfg_path)
    data = root / "data"
    run = root / "run"
    assert main(["gen-data", "--config", str(cfg_path), "--out", str(data)]) == EXIT_OK
    assert main(["train", "--config", str(cfg_path), "--data", str(data),
                 "--out", str(run)]) == EXIT_OK
    return {"root": root, "config": cfg_path, "data": data, "run": run}


# ----------------------------------------------------------------- gen-data
def test_gen_data_outputs(workdir):
    data = workdir["data"]
    for name in ("train_episodes.jsonl", "seen_episodes.jsonl",
                 "unseen_episodes.jsonl", "train_records.bin",
                 "unseen_records.bin", "config.json"):
        assert (data / name).exists(), name
    assert not (data / ".partial").exists()
    from mapnav.train_eval import load_records
    records = load_records(data / "train_records.bin")
    n_eps = len((data / "train_episodes.jsonl").read_text().splitlines())
    assert len(records) == 2 * n_eps  # samples_per_episode = 2


def test_gen_data_byte_reproducible(workdir, tmp_path):
    rerun = tmp_path / "data2"
    assert main(["gen-data", "--config", str(workdir["config"]),
                 "--out", str(rerun)]) == EXIT_OK
    for name in os.listdir(workdir["data"]):
        a = (workdir["data"] / name).read_bytes()
        b = (rerun / name).read_bytes()
        assert a == b, name


def test_gen_data_corrupt_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"not_a_field": 1}')
    out = tmp_path / "out"
    assert main(["gen-data", "--config", str(bad), "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()  # no partial output
    assert "error" in capsys.readouterr().err


def test_gen_data_missing_config(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE


# -------------------------------------------------------------------- train
def test_train_outputs(workdir):
    assert (workdir["run"] / "model.ckpt").exists()
    curve = (workdir["run"] / "loss_curve.csv").read_text().splitlines()
    assert curve[0] == "step,loss,loss_wp,loss_m"
    assert len(curve) == 1 + 6  # header + train_steps rows


def test_train_missing_data(workdir, tmp_path):
    assert main(["train", "--config", str(workdir["config"]),
                 "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE


# --------------------------------------------------------------------- eval
def test_eval_writes_metrics(workdir, tmp_path, capsys):
    out = tmp_path / "metrics.csv"
    code = main(["eval", "--config", str(workdir["config"]),
                 "--ckpt", str(workdir["run"] / "model.ckpt"),
                 "--data", str(workdir["data"]), "--split", "unseen",
                 "--out", str(out)])
    assert code == EXIT_OK
    lines = [l for l in out.read_text().splitlines() if l]
    n_eps = len((workdir["data"] / "unseen_episodes.jsonl").read_text().splitlines())
    assert lines[0] == "episode,TL,NE,OS,SR,SPL"
    assert len(lines) == 1 + n_eps + 1  # header + rows + aggregate
    assert lines[-1].startswith("aggregate")
    assert "PCW" in capsys.readouterr().out


def test_eval_missing_checkpoint(workdir, tmp_path):
    assert main(["eval", "--config", str(workdir["config"]),
                 "--ckpt", str(tmp_path / "none.ckpt"),
                 "--data", str(workdir["data"])]) == EXIT_USAGE


# ----------------------------------------------------------- rollout + viz
def first_episode_id(workdir):
    line = (workdir["data"] / "unseen_episodes.jsonl").read_text().splitlines()[0]
    return json.loads(line)["id"]


def test_rollout_and_viz(workdir, tmp_path):
    ep_id = first_episode_id(workdir)
    trace = tmp_path / "trace.jsonl"
    episodes = workdir["data"] / "unseen_episodes.jsonl"
    code = main(["rollout", "--config", str(workdir["config"]),
                 "--ckpt", str(workdir["run"] / "model.ckpt"),
                 "--episodes", str(episodes), "--episode", str(ep_id),
                 "--trace", str(trace)])
    assert code == EXIT_OK
    rows = [json.loads(l) for l in trace.read_text().splitlines()]
    assert rows and all("action" in r and "pose" in r for r in rows)

    imgdir = tmp_path / "imgs"
    code = main(["viz", "--config", str(workdir["config"]),
                 "--ckpt", str(workdir["run"] / "model.ckpt"),
                 "--episodes", str(episodes), "--episode", str(ep_id),
                 "--trace", str(trace), "--out", str(imgdir)])
    assert code == EXIT_OK
    maps = [f for f in os.listdir(imgdir) if f.endswith("-map.ppm")]
    assert len(maps) == len(rows)  # one image set per traced step
    assert any(f.endswith("-features.pgm") for f in os.listdir(imgdir))


def test_rollout_unknown_episode(workdir, tmp_path):
    assert main(["rollout", "--config", str(workdir["config"]),
                 "--ckpt", str(workdir["run"] / "model.ckpt"),
                 "--episodes", str(workdir["data"] / "unseen_episodes.jsonl"),
                 "--episode", "999999999",
                 "--trace", str(tmp_path / "t.jsonl")]) == EXIT_USAGE


# ------------------------------------------------------------------- config
def test_config_round_trip(tmp_path):
    cfg = tiny_config(mode="cm2-gt", tau=1.5)
    path = tmp_path / "c.json"
    cfg.save(path)
    assert RunConfig.load(path) == cfg


def test_config_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CM2_SEED", "77")
    assert RunConfig().seed == 77


def test_config_rejects_invalid():
    from mapnav.errors import ConfigError
    with pytest.raises(ConfigError):
        tiny_config(mode="bogus")
    with pytest.raises(ConfigError):
        tiny_config(ego_size=25)


def test_exit_code_constants():
    assert (EXIT_OK, EXIT_USAGE, EXIT_NUMERIC) == (0, 2, 3)
