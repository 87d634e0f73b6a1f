import json
import os

import numpy as np
import pytest
import yaml

from socnavsim.cli import main
from socnavsim.crowd import CrowdConfig
from socnavsim.world import EnvConfig, save_config


@pytest.fixture
def env_yaml(tmp_path):
    cfg = EnvConfig(beam_count=64, max_steps=30, crowd=CrowdConfig(count=0))
    path = tmp_path / "env.yaml"
    save_config(cfg, path)
    return str(path)


def read_tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


class TestEval:
    def test_greedy_mapless_writes_outputs(self, tmp_path, env_yaml):
        out = tmp_path / "out"
        rc = main([
            "--single-thread", "eval", "--policy", "greedy", "--suite", "mapless",
            "--runs", "2", "--seed", "3", "--config", env_yaml, "--out", str(out),
        ])
        assert rc == 0
        names = sorted(os.listdir(out))
        assert any(n.startswith("metrics__") for n in names)
        assert sum(n.startswith("traj__") for n in names) == 2
        assert sum(n.startswith("log__") for n in names) == 2
        metrics_file = next(n for n in names if n.startswith("metrics__"))
        doc = json.loads((out / metrics_file).read_text())
        assert doc["runs"] == 2

    def test_determinism_byte_identical(self, tmp_path, env_yaml):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = main([
                "--single-thread", "eval", "--policy", "greedy", "--suite", "mapless",
                "--runs", "2", "--seed", "11", "--config", env_yaml, "--out", str(out),
            ])
            assert rc == 0
        ta, tb = read_tree(a), read_tree(b)
        assert ta.keys() == tb.keys()
        for k in ta:
            assert ta[k] == tb[k], k

    def test_unknown_suite_usage_error(self, tmp_path, env_yaml):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--policy", "greedy", "--suite", "wormhole",
                  "--config", env_yaml, "--out", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_unknown_policy_usage_error(self, tmp_path, env_yaml):
        with pytest.raises(SystemExit):
            main(["eval", "--policy", "/nonexistent.npz", "--suite", "mapless",
                  "--config", env_yaml, "--out", str(tmp_path / "x")])

    def test_checkpoint_beam_mismatch_fails(self, tmp_path, env_yaml):
        from socnavsim.ddpg import DDPG, DDPGConfig
        from socnavsim.networks import default_network_spec

        ck = tmp_path / "ck.npz"
        learner = DDPG(default_network_spec(40, 32), DDPGConfig(), np.random.default_rng(0))
        learner.save(ck, {"stage": "ego", "beam_count": 32})
        with pytest.raises(SystemExit):
            main(["eval", "--policy", str(ck), "--suite", "mapless",
                  "--config", env_yaml, "--out", str(tmp_path / "x")])


class TestTrain:
    def test_budget_zero_writes_initial_checkpoint(self, tmp_path, env_yaml):
        out = tmp_path / "run"
        rc = main([
            "--single-thread", "train", "--stage", "ego", "--config", env_yaml,
            "--out", str(out), "--seed", "1", "--budget", "0",
        ])
        assert rc == 0
        files = os.listdir(out)
        assert "checkpoint_ego_init.npz" in files
        assert "checkpoint_ego_final.npz" in files
        assert "curve_ego.jsonl" in files

    def test_social_without_warm_start_usage_error(self, tmp_path, env_yaml):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--stage", "social", "--config", env_yaml,
                  "--out", str(tmp_path / "x"), "--budget", "0"])
        assert exc.value.code == 2

    def test_social_with_override_runs(self, tmp_path, env_yaml):
        rc = main([
            "train", "--stage", "social", "--allow-cold-social", "--config", env_yaml,
            "--out", str(tmp_path / "x"), "--budget", "0",
        ])
        assert rc == 0

    def test_short_training_deterministic_curves(self, tmp_path, env_yaml):
        curves = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            rc = main([
                "--single-thread", "train", "--stage", "ego", "--config", env_yaml,
                "--out", str(out), "--seed", "5", "--budget", "80",
                "--warmup-steps", "20", "--batch-size", "8", "--buffer-capacity", "200",
                "--eval-every", "1000000", "--checkpoint-every", "1000000",
            ])
            assert rc == 0
            curves.append((out / "curve_ego.jsonl").read_bytes())
        assert curves[0] == curves[1]


class TestScenarioGen:
    def test_writes_snapshot(self, tmp_path, env_yaml):
        out = tmp_path / "scen"
        rc = main(["scenario-gen", "--suite", "crowd:towards:4", "--seed", "2",
                   "--config", env_yaml, "--out", str(out)])
        assert rc == 0
        files = os.listdir(out)
        assert len(files) == 1
        doc = yaml.safe_load((out / files[0]).read_text())
        assert len(doc["pedestrians"]) == 4
        assert doc["suite"] == "crowd:towards:4"

    def test_deterministic(self, tmp_path, env_yaml):
        outs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            main(["scenario-gen", "--suite", "crowd:random:4", "--seed", "9",
                  "--config", env_yaml, "--out", str(out)])
            f = os.listdir(out)[0]
            outs.append((out / f).read_bytes())
        assert outs[0] == outs[1]


class TestReplayExport:
    def test_log_to_table(self, tmp_path, env_yaml):
        run_out = tmp_path / "run"
        main(["--single-thread", "eval", "--policy", "greedy", "--suite", "mapless",
              "--runs", "1", "--seed", "4", "--config", env_yaml, "--out", str(run_out)])
        log_file = next(
            str(run_out / n) for n in os.listdir(run_out) if n.startswith("log__")
        )
        exp_out = tmp_path / "tables"
        rc = main(["replay-export", "--log", log_file, "--format", "curve-series",
                   "--out", str(exp_out)])
        assert rc == 0
        assert any(n.startswith("episodes__") for n in os.listdir(exp_out))
