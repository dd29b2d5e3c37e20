import json
import os
import subprocess
import sys

import numpy as np
import pytest

from parkour.cli import main
from parkour.config import (
    RunConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    save_config,
)
from parkour.errors import ConfigurationError


def tiny_cfg_dict(**overrides):
    cfg = RunConfig()
    cfg.terrain.kinds = ["flat"]
    cfg.terrain.levels = 1
    cfg.learning.workers = 4
    cfg.learning.horizon = 8
    cfg.learning.iters = 2
    cfg.distill.workers = 2
    cfg.distill.chunk_steps = 10
    cfg.distill.iters = 2
    cfg.distill.gru_hidden = 16
    cfg.eval.robots = 4
    d = config_to_dict(cfg)
    d.update(overrides)
    return d


def write_cfg(tmp_path, name="run.json", **overrides):
    path = tmp_path / name
    with open(path, "w") as f:
        json.dump(tiny_cfg_dict(**overrides), f)
    return path


class TestConfig:
    def test_defaults_roundtrip(self, tmp_path):
        cfg = RunConfig()
        p = tmp_path / "c.json"
        save_config(p, cfg)
        again = load_config(p)
        assert config_hash(again) == config_hash(cfg)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown keys"):
            config_from_dict({"seed": 0, "bogus_section": {}})
        with pytest.raises(ConfigurationError, match="unknown keys"):
            config_from_dict({"rewards": {"w_tracknig": 1.0}})

    def test_type_errors_rejected(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"seed": "zero"})
        with pytest.raises(ConfigurationError):
            config_from_dict({"episode": {"v_cmd_range": [0.5, "x"]}})

    def test_semantic_validation(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"episode": {"w_prob": 2.0}})
        with pytest.raises(ConfigurationError):
            config_from_dict({"terrain": {"kinds": ["lava"]}})

    def test_hash_changes_with_content(self):
        a = config_from_dict({"seed": 0})
        b = config_from_dict({"seed": 1})
        assert config_hash(a) != config_hash(b)


class TestCLI:
    def test_missing_config_exits_2(self, tmp_path):
        rc = main(["--workdir", str(tmp_path), "train-phase1",
                   "--config", "nope.json"])
        assert rc == 2

    def test_invalid_config_exits_2(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"unknown_key": 1}')
        rc = main(["--workdir", str(tmp_path), "train-phase1",
                   "--config", "bad.json"])
        assert rc == 2

    def test_train_writes_artifacts_with_row_count(self, tmp_path):
        write_cfg(tmp_path)
        rc = main(["--workdir", str(tmp_path), "train-phase1",
                   "--config", "run.json", "--iters", "3"])
        assert rc == 0
        csv = (tmp_path / "train_phase1.csv").read_text().splitlines()
        assert len(csv) == 4  # header + one row per iteration
        assert (tmp_path / "phase1.pkpt").exists()
        assert (tmp_path / "summary_phase1.json").exists()

    def test_train_deterministic_csvs(self, tmp_path):
        write_cfg(tmp_path)
        for sub in ("a", "b"):
            rc = main(["--workdir", str(tmp_path / sub), "train-phase1",
                       "--config", str(tmp_path / "run.json"), "--iters", "3"])
            assert rc == 0
        a = (tmp_path / "a" / "train_phase1.csv").read_bytes()
        b = (tmp_path / "b" / "train_phase1.csv").read_bytes()
        assert a == b

    def test_distill_rejects_phase2_teacher(self, tmp_path):
        write_cfg(tmp_path)
        assert main(["--workdir", str(tmp_path), "train-phase1",
                     "--config", "run.json", "--iters", "1"]) == 0
        assert main(["--workdir", str(tmp_path), "distill-phase2",
                     "--config", "run.json", "--teacher", "phase1.pkpt",
                     "--variant", "oracle", "--iters", "1"]) == 0
        # feeding the student checkpoint back as a teacher must exit 3
        rc = main(["--workdir", str(tmp_path), "distill-phase2",
                   "--config", "run.json", "--teacher", "phase2_oracle.pkpt",
                   "--iters", "1"])
        assert rc == 3

    def test_distill_missing_teacher_exits_3(self, tmp_path):
        write_cfg(tmp_path)
        rc = main(["--workdir", str(tmp_path), "distill-phase2",
                   "--config", "run.json", "--teacher", "ghost.pkpt"])
        assert rc == 3

    def test_eval_csv_contract(self, tmp_path):
        write_cfg(tmp_path)
        assert main(["--workdir", str(tmp_path), "train-phase1",
                     "--config", "run.json", "--iters", "1"]) == 0
        rc = main(["--workdir", str(tmp_path), "eval", "--config", "run.json",
                   "--checkpoint", "phase1.pkpt", "--robots", "4",
                   "--duration", "1.0", "--dump-traj", "traj.jsonl"])
        assert rc == 0
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == "terrain,variant,mxd_mean,mxd_std,mev_mean,mev_std"
        assert lines[1].startswith("flat,ours,")
        traj = [json.loads(l) for l in (tmp_path / "traj.jsonl").read_text().splitlines()]
        assert len(traj) == 4 * 50  # robots x steps
        rec = traj[0]
        for key in ("t", "robot", "base_pos", "feet", "contacts", "rewards",
                    "level", "waypoint_index"):
            assert key in rec

    def test_eval_dump_depth(self, tmp_path):
        from parkour.sensing import load_depth_trace
        write_cfg(tmp_path)
        assert main(["--workdir", str(tmp_path), "train-phase1",
                     "--config", "run.json", "--iters", "1"]) == 0
        rc = main(["--workdir", str(tmp_path), "eval", "--config", "run.json",
                   "--checkpoint", "phase1.pkpt", "--robots", "2",
                   "--duration", "1.0", "--dump-depth", "depth.pkdp"])
        assert rc == 0
        frames = load_depth_trace(tmp_path / "depth.pkdp")
        assert len(frames) >= 8  # ~10 Hz over 1 s
        assert frames[0][1].shape == (58, 87)

    def test_ablate_rows_and_variants(self, tmp_path):
        write_cfg(tmp_path)
        rc = main(["--workdir", str(tmp_path), "ablate", "--config", "run.json",
                   "--variants", "ours,noclear", "--iters", "2",
                   "--robots", "4", "--duration", "1.0"])
        assert rc == 0
        lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert lines[0] == "terrain,variant,mxd_mean,mxd_std,mev_mean,mev_std"
        assert len(lines) == 3
        assert lines[1].split(",")[1] == "ours"
        assert lines[2].split(",")[1] == "noclear"

    def test_ablate_unknown_variant_exits_2(self, tmp_path):
        write_cfg(tmp_path)
        rc = main(["--workdir", str(tmp_path), "ablate", "--config", "run.json",
                   "--variants", "ours,warp"])
        assert rc == 2

    def test_pkf_seed_override(self, tmp_path, monkeypatch):
        write_cfg(tmp_path)
        monkeypatch.setenv("PKF_SEED", "7")
        assert main(["--workdir", str(tmp_path / "s7"), "train-phase1",
                     "--config", str(tmp_path / "run.json"), "--iters", "2"]) == 0
        monkeypatch.setenv("PKF_SEED", "8")
        assert main(["--workdir", str(tmp_path / "s8"), "train-phase1",
                     "--config", str(tmp_path / "run.json"), "--iters", "2"]) == 0
        a = (tmp_path / "s7" / "train_phase1.csv").read_bytes()
        b = (tmp_path / "s8" / "train_phase1.csv").read_bytes()
        assert a != b

    def test_console_entry_point(self, tmp_path):
        write_cfg(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "parkour.cli", "--workdir", str(tmp_path),
             "train-phase1", "--config", "run.json", "--iters", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "checkpoint:" in proc.stdout


class TestVariantBehaviors:
    def test_noinner_uses_base_frame_velocity(self):
        from parkour.env import ParkourEnv
        from parkour.learning import build_course
        cfg = config_from_dict(tiny_cfg_dict())
        hf, course = build_course(cfg)
        env_ours = ParkourEnv(hf, course, cfg, 2, seed=0, variant="ours")
        env_noin = ParkourEnv(hf, course, cfg, 2, seed=0, variant="noinner")
        for env in (env_ours, env_noin):
            env.state.vel[:, 0] = 1.0
            env.state.yaw[:] = np.pi  # facing backwards while moving +x
            env.v_cmd[:] = 1.0
        r_ours, _, _ = env_ours._rewards(np.zeros((2, 12)))
        r_noin, _, _ = env_noin._rewards(np.zeros((2, 12)))
        # world-frame tracking rewards +x motion toward the waypoint;
        # base-frame tracking sees backward motion and penalizes it
        assert (r_ours > r_noin).all()

    def test_noisy_scandots_differ_from_clean(self):
        from parkour.env import ParkourEnv
        from parkour.learning import build_course
        cfg = config_from_dict(tiny_cfg_dict())
        hf, course = build_course(cfg)
        clean = ParkourEnv(hf, course, cfg, 2, seed=0, variant="ours").scandots()
        noisy = ParkourEnv(hf, course, cfg, 2, seed=0, variant="noisy").scandots()
        assert not np.allclose(clean, noisy)

    def test_noclear_zeroes_clearance_weight(self):
        from parkour.env import ParkourEnv
        from parkour.learning import build_course
        cfg = config_from_dict(tiny_cfg_dict())
        hf, course = build_course(cfg)
        env = ParkourEnv(hf, course, cfg, 2, seed=0, variant="noclear")
        assert env.rew_cfg.w_clearance == 0.0
