"""CLI contract tests: commands, flags, exit codes, and output layout."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from rtmv.cli import main
from rtmv.config import RunConfig, load_config
from rtmv.errors import ConfigError

TINY = [
    "--model.patch_size", "4", "--model.embed_dim", "16",
    "--model.num_blocks", "2", "--model.num_heads", "2",
    "--augment.target_size", "16",
]
TINY_SCENE = [
    "--synth.scene.image_size", "16", "--synth.scene.frames_per_trajectory", "4",
    "--synth.scene.focal_factor", "1.0",
]


def checksums(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "config.json"
    }


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Scenes + pretrained checkpoint shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--seed", "3",
                 "--synth.n_scenes", "2", *TINY_SCENE]) == 0
    scenes = json.dumps([str(root / "data/scenes/scene0"), str(root / "data/scenes/scene1")])
    assert main(["train", "--out", str(root / "pre"), "--seed", "0",
                 "--train.mode", "pretrain", "--data.scenes", scenes, *TINY,
                 "--optim.epochs", "1", "--optim.batch_size", "4",
                 "--optim.steps_per_epoch", "3", "--optim.learning_rate", "1e-4"]) == 0
    return root, scenes


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = load_config(None, [])
        assert isinstance(cfg, RunConfig)
        assert cfg.loss.lambda_camera == 5.0
        assert cfg.optim.learning_rate == 5e-5
        assert cfg.optim.weight_decay == 1e-2
        assert cfg.optim.batch_size == 24
        assert cfg.optim.warmup_fraction == 0.10

    def test_dotted_overrides(self):
        cfg = load_config(None, ["optim.learning_rate=1e-3", "model.embed_dim=32",
                                 "eval.sweep_grid=[0.1, 0.9]"])
        assert cfg.optim.learning_rate == 1e-3
        assert cfg.model.embed_dim == 32
        assert cfg.eval.sweep_grid == (0.1, 0.9)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["optim.momentum=0.9"])

    def test_config_file_plus_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"seed": 9, "optim": {"epochs": 7}}))
        cfg = load_config(p, ["optim.epochs=3"])
        assert cfg.seed == 9
        assert cfg.optim.epochs == 3


class TestSynth:
    def test_same_seed_identical_checksums(self, tmp_path):
        args = ["synth", "--seed", "5", "--synth.n_scenes", "1", *TINY_SCENE]
        assert main([*args, "--out", str(tmp_path / "a")]) == 0
        assert main([*args, "--out", str(tmp_path / "b")]) == 0
        assert checksums(tmp_path / "a") == checksums(tmp_path / "b")

    def test_refuses_overwrite_without_force(self, tmp_path):
        args = ["synth", "--out", str(tmp_path / "x"), "--seed", "5",
                "--synth.n_scenes", "1", *TINY_SCENE]
        assert main(args) == 0
        assert main(args) == 2
        assert main([*args, "--force"]) == 0

    def test_writes_config_snapshot(self, tmp_path):
        out = tmp_path / "snap"
        assert main(["synth", "--out", str(out), "--seed", "1",
                     "--synth.n_scenes", "1", *TINY_SCENE]) == 0
        snap = json.loads((out / "config.json").read_text())
        assert snap["seed"] == 1
        assert snap["synth"]["scene"]["image_size"] == 16

    def test_manifests_validate(self, tmp_path):
        from rtmv.data import load_manifest

        out = tmp_path / "v"
        assert main(["synth", "--out", str(out), "--seed", "2",
                     "--synth.n_scenes", "2", *TINY_SCENE]) == 0
        for i in range(2):
            scene = load_manifest(out / "scenes" / f"scene{i}" / "manifest.json")
            assert scene.trajectories() == [0, 1]


class TestTrain:
    def test_zero_epochs_equals_init(self, workspace, tmp_path):
        root, scenes = workspace
        out = tmp_path / "t0"
        assert main(["train", "--out", str(out), "--seed", "0",
                     "--train.mode", "pretrain", "--data.scenes", scenes, *TINY,
                     "--optim.epochs", "0", "--optim.batch_size", "4"]) == 0
        from rtmv.checkpoint import load_checkpoint
        from rtmv.model import ModelConfig, build_model

        trained = load_checkpoint(out / "checkpoints" / "latest.npz")
        fresh = build_model(ModelConfig(patch_size=4, embed_dim=16, num_blocks=2,
                                        num_heads=2), seed=0)
        for (n1, p1), (_, p2) in zip(trained.named_parameters(), fresh.named_parameters()):
            np.testing.assert_allclose(p1.detach().numpy(), p2.detach().numpy(),
                                       atol=1e-7, err_msg=n1)

    def test_finetune_requires_checkpoint(self, workspace, tmp_path):
        _, scenes = workspace
        assert main(["train", "--out", str(tmp_path / "ft"), "--seed", "0",
                     "--train.mode", "finetune", "--data.scenes", scenes, *TINY,
                     "--optim.epochs", "1", "--optim.batch_size", "4"]) == 2

    def test_finetune_writes_adapter_archive(self, workspace, tmp_path):
        root, scenes = workspace
        out = tmp_path / "ft"
        assert main(["train", "--out", str(out), "--seed", "0",
                     "--train.mode", "finetune",
                     "--train.init_checkpoint", str(root / "pre/checkpoints/latest.npz"),
                     "--data.scenes", scenes, *TINY,
                     "--lora.rank", "2", "--lora.alpha", "4",
                     "--optim.epochs", "1", "--optim.batch_size", "4",
                     "--optim.steps_per_epoch", "2", "--optim.learning_rate", "1e-3"]) == 0
        assert (out / "checkpoints" / "adapters.npz").exists()
        assert (out / "train_log.jsonl").exists()
        state = json.loads((out / "checkpoints" / "train_state.json").read_text())
        assert state["step"] == 2

    def test_resume_continues_counter(self, workspace, tmp_path):
        root, scenes = workspace
        out = tmp_path / "res"
        base_args = ["train", "--out", str(out), "--seed", "0",
                     "--train.mode", "pretrain", "--data.scenes", scenes, *TINY,
                     "--optim.batch_size", "4", "--optim.steps_per_epoch", "2",
                     "--optim.learning_rate", "1e-4"]
        assert main([*base_args, "--optim.epochs", "1"]) == 0
        assert main([*base_args, "--optim.epochs", "2", "--train.resume", "true"]) == 0
        state = json.loads((out / "checkpoints" / "train_state.json").read_text())
        assert state["step"] == 4
        steps = [json.loads(line)["step"] for line in (out / "train_log.jsonl").read_text().splitlines()]
        assert steps == [1, 2, 3, 4]


class TestEval:
    def test_eval_outputs_and_sweep(self, workspace, tmp_path):
        root, scenes = workspace
        out = tmp_path / "ev"
        assert main(["eval", "--out", str(out), "--seed", "0",
                     "--eval.checkpoint", str(root / "pre/checkpoints/latest.npz"),
                     "--data.scenes", scenes,
                     "--eval.sweep_grid", "[0.25, 0.5]",
                     "--eval.with_clouds", "false"]) == 0
        metrics = out / "metrics"
        summary = json.loads((metrics / "summary.json").read_text())
        assert summary["registration_rate_pct"] == 100.0
        csv = (metrics / "summary.csv").read_text().splitlines()
        assert csv[0] == "auc,rra,rta,pca,pcc,chamfer,reg,fps"
        rows = json.loads((metrics / "tau_sweep.json").read_text())
        assert len(rows) == 2 * 2 * 3  # grid x scenes x repeats
        per_scene = json.loads((metrics / "per_scene.json").read_text())
        assert set(per_scene) == {"scene0", "scene1"}

    def test_missing_checkpoint_is_validation_error(self, workspace, tmp_path):
        _, scenes = workspace
        assert main(["eval", "--out", str(tmp_path / "e2"), "--seed", "0",
                     "--eval.checkpoint", str(tmp_path / "nope.npz"),
                     "--data.scenes", scenes]) == 2


class TestAnalyze:
    def test_profiles_and_pca_export(self, workspace, tmp_path):
        root, scenes = workspace
        out = tmp_path / "an"
        ckpt = str(root / "pre/checkpoints/latest.npz")
        assert main(["analyze", "--out", str(out), "--seed", "0",
                     "--data.scenes", scenes,
                     "--analyze.checkpoints", json.dumps({"base": ckpt}),
                     "--analyze.batch_size", "6", "--analyze.n_batches", "1"]) == 0
        doc = json.loads((out / "analysis" / "base_profile.json").read_text())
        assert set(doc) == {"profile", "jeffreys_final_layer", "bootstrap_bands"}
        assert set(doc["profile"]["0"]) == {"median", "q25", "q75"}
        pca = (out / "analysis" / "base_pca.csv").read_text().splitlines()
        assert pca[0] == "model,scene,layer,modality,pc1,pc2"
        assert len(pca) > 10

    def test_ablation_welch_matrix(self, workspace, tmp_path):
        out = tmp_path / "ab"
        r1 = tmp_path / "r1.json"
        r2 = tmp_path / "r2.json"
        r1.write_text(json.dumps({"s0": 60.0, "s1": 62.0, "s2": 58.0}))
        r2.write_text(json.dumps({"s0": 40.0, "s1": 44.0, "s2": 39.0}))
        assert main(["analyze", "--out", str(out), "--seed", "0",
                     "--analyze.ablation_results",
                     json.dumps({"ours": str(r1), "variant": str(r2)})]) == 0
        doc = json.loads((out / "analysis" / "welch_matrix.json").read_text())
        assert doc["rows"] == ["ours", "variant"]
        mat = np.array(doc["p_values"])
        assert mat[0, 1] > 0.9  # ours clearly ahead: no evidence against its superiority
        assert mat[1, 0] < 0.1
        lines = (out / "analysis" / "welch_matrix.csv").read_text().splitlines()
        assert lines[0] == ",ours,variant"

    def test_single_result_set_rejected(self, tmp_path):
        r1 = tmp_path / "r1.json"
        r1.write_text(json.dumps({"s0": 60.0, "s1": 62.0}))
        assert main(["analyze", "--out", str(tmp_path / "x"), "--seed", "0",
                     "--analyze.ablation_results", json.dumps({"only": str(r1)})]) == 2
