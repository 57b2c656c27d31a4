import os

import numpy as np
import pytest
import torch

from fogflow.config import TrainConfig, load_config
from fogflow.data import save_image, write_flo
from fogflow.training import train

H, W = 64, 64


def build_corpus(root, n_syn=2, n_clean=2, n_fog=2):
    rng = np.random.default_rng(7)
    root.mkdir(parents=True, exist_ok=True)

    def image(name):
        img = torch.from_numpy(rng.random((H, W, 3), dtype=np.float32))
        save_image(root / name, img)
        return name

    syn_lines = []
    for i in range(n_syn):
        a = image(f"s{i}_1.png")
        b = image(f"s{i}_2.png")
        np.save(root / f"s{i}_d1.npy", rng.uniform(5, 40, (H, W)).astype(np.float32))
        np.save(root / f"s{i}_d2.npy", rng.uniform(5, 40, (H, W)).astype(np.float32))
        flow = np.zeros((H, W, 2), dtype=np.float32)
        flow[:, :, 0] = -1.0
        write_flo(root / f"s{i}.flo", flow)
        syn_lines.append(f"{a} {b} s{i}_d1.npy s{i}_d2.npy s{i}.flo")
    (root / "syn.txt").write_text("\n".join(syn_lines) + "\n")

    for prefix, n in (("c", n_clean), ("f", n_fog)):
        lines = [f"{image(f'{prefix}{i}_1.png')} {image(f'{prefix}{i}_2.png')}" for i in range(n)]
        (root / f"{prefix}pairs.txt").write_text("\n".join(lines) + "\n")

    return {
        "synthetic_manifest": str(root / "syn.txt"),
        "clean_manifest": str(root / "cpairs.txt"),
        "fog_manifest": str(root / "fpairs.txt"),
    }


def toy_train_config(tmp_path, corpus, **kw):
    base = dict(
        seed=1,
        batch_size=1,
        crop_height=H,
        crop_width=W,
        total_cycles=2,
        checkpoint_every=2,
        keep_checkpoints=3,
        out_dir=str(tmp_path / "run"),
        **corpus,
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(root)


class TestTrainLoop:
    def test_toy_run_logs_and_checkpoints(self, tmp_path, corpus):
        cfg = toy_train_config(tmp_path, corpus)
        state = train(cfg)
        assert state.step == 6
        lines = open(cfg.resolved_log_csv()).read().splitlines()
        assert lines[0].startswith("step,stage,")
        assert len(lines) == 7
        stages = [ln.split(",")[1] for ln in lines[1:]]
        assert stages == ["synthetic", "real_clean", "real_fog"] * 2
        ckpts = sorted(f for f in os.listdir(cfg.out_dir) if f.endswith(".pt"))
        assert ckpts == ["ckpt_2.pt", "ckpt_4.pt", "ckpt_6.pt"]

    def test_resume_continues_log_identically(self, tmp_path, corpus):
        cfg_a = toy_train_config(tmp_path / "a", corpus, total_cycles=2, checkpoint_every=0)
        train(cfg_a)
        log_a = open(cfg_a.resolved_log_csv()).read()

        cfg_b1 = toy_train_config(tmp_path / "b", corpus, total_cycles=1, checkpoint_every=0)
        train(cfg_b1)
        cfg_b2 = toy_train_config(tmp_path / "b", corpus, total_cycles=2, checkpoint_every=0)
        train(cfg_b2, resume=os.path.join(cfg_b2.out_dir, "ckpt_3.pt"))
        log_b = open(cfg_b2.resolved_log_csv()).read()
        assert log_a == log_b

    def test_dataset_errors_surface_before_step_one(self, tmp_path, corpus):
        cfg = toy_train_config(tmp_path, corpus, synthetic_manifest=str(tmp_path / "missing.txt"))
        with pytest.raises(OSError):
            train(cfg)
        assert not os.path.exists(cfg.resolved_log_csv())

    def test_cli_train_smoke(self, tmp_path, corpus):
        from fogflow.cli import main

        out_dir = tmp_path / "cli_run"
        cfg_path = tmp_path / "run.toml"
        cfg_path.write_text(
            f'synthetic_manifest = "{corpus["synthetic_manifest"]}"\n'
            f'clean_manifest = "{corpus["clean_manifest"]}"\n'
            f'fog_manifest = "{corpus["fog_manifest"]}"\n'
            f'out_dir = "{out_dir}"\n'
            "batch_size = 1\ncrop_height = 64\ncrop_width = 64\n"
            "total_cycles = 1\ncheckpoint_every = 0\n"
        )
        assert main(["train", "--config", str(cfg_path), "--seed", "5"]) == 0
        assert (out_dir / "ckpt_3.pt").exists()
        assert (out_dir / "losses.csv").exists()

    def test_transform_ablation_runs_supervised_only(self, tmp_path, corpus):
        cfg = toy_train_config(
            tmp_path, corpus, use_transform=False, total_cycles=1, checkpoint_every=0
        )
        state = train(cfg)
        assert state.step == 3  # three synthetic steps, real stages skipped
        lines = open(cfg.resolved_log_csv()).read().splitlines()
        stages = {ln.split(",")[1] for ln in lines[1:]}
        assert stages == {"synthetic"}


class TestConfig:
    def test_load_toml_and_env_override(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('lr = 1e-3\nbatch_size = 2\nuse_hazeline = false\n')
        cfg = load_config(path, env={})
        assert cfg.lr == pytest.approx(1e-3)
        assert cfg.batch_size == 2 and cfg.use_hazeline is False
        cfg2 = load_config(path, env={"FOGFLOW_LR": "5e-4", "FOGFLOW_USE_HAZELINE": "1"})
        assert cfg2.lr == pytest.approx(5e-4) and cfg2.use_hazeline is True

    def test_load_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"seed": 9, "w_con": 5.0}')
        cfg = load_config(path, env={})
        assert cfg.seed == 9 and cfg.w_con == 5.0

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"nope": 1}')
        with pytest.raises(ValueError):
            load_config(path, env={})

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(crop_height=100).validate()
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0).validate()
