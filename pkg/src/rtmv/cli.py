"""Command-line entry point: synth | train | eval | analyze.

Shared flags: --config PATH, --seed N, --out DIR, --force, plus dotted-path
overrides (``--optim.learning_rate 1e-4`` or ``--optim.learning_rate=1e-4``).
Every command writes a resolved config snapshot into the output directory.
Exit codes: 0 success, 2 validation error, 3 runtime/numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .adapters import inject, trainable_fraction
from .checkpoint import load_checkpoint, save_adapters, save_checkpoint
from .config import RunConfig, load_config, write_config_snapshot
from .data import load_manifest
from .errors import ConfigError, RtmvError, TrainingAbort
from .evaluate import capture_layer_tokens, evaluate_scenes, tau_sweep
from .metrics import MetricsReport
from .model import build_model
from .synth import SyntheticSceneConfig, generate_synthetic_scene
from .training import TrainState, train

VALIDATION_EXIT = 2
RUNTIME_EXIT = 3


def _load_scenes(config: RunConfig):
    if not config.data.scenes:
        raise ConfigError("data.scenes must list at least one scene manifest")
    scenes = []
    for entry in config.data.scenes:
        path = Path(entry)
        if path.is_dir():
            path = path / "manifest.json"
        scenes.append(load_manifest(path))
    return scenes


def cmd_synth(config: RunConfig) -> int:
    out = Path(config.out) / "scenes"
    if out.exists() and any(out.iterdir()) and not config.force:
        raise ConfigError(f"{out} already exists; pass --force to overwrite")
    base = dataclasses.asdict(config.synth.scene)
    for i in range(config.synth.n_scenes):
        scene_cfg = SyntheticSceneConfig(
            **{**base, "name": f"scene{i}", "seed": config.seed + i}
        )
        manifest = generate_synthetic_scene(scene_cfg, out / f"scene{i}")
        print(f"synth: wrote {manifest.scene} ({len(manifest.frames)} frames) to {out / f'scene{i}'}")
    return 0


def cmd_train(config: RunConfig) -> int:
    scenes = _load_scenes(config)
    out = Path(config.out)
    ckpt_dir = out / "checkpoints"
    state = TrainState()
    if config.train.mode == "pretrain":
        model = build_model(config.model, seed=config.seed)
        rgb_only = True
    else:
        if not config.train.init_checkpoint:
            raise ConfigError("finetune mode requires train.init_checkpoint")
        model = load_checkpoint(config.train.init_checkpoint)
        inject(model, config.lora, train_heads=config.train.train_heads)
        rgb_only = False
    state_path = ckpt_dir / "train_state.json"
    if config.train.resume and state_path.exists():
        state = TrainState(**json.loads(state_path.read_text()))
        model = load_checkpoint(ckpt_dir / "latest.npz")
        print(f"train: resuming from step {state.step}")
    print(f"train: mode={config.train.mode}, trainable fraction {trainable_fraction(model):.4f}")
    result = train(
        model,
        scenes,
        config.optim,
        config.loss,
        augment=config.augment,
        rgb_only=rgb_only,
        log_path=out / "train_log.jsonl",
        state=state,
    )
    save_checkpoint(model, ckpt_dir / "latest.npz")
    if config.train.mode == "finetune":
        save_adapters(model, ckpt_dir / "adapters.npz")
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    state_path.write_text(json.dumps(dataclasses.asdict(result.state)))
    print(f"train: finished at step {result.state.step} (loss avg {result.state.loss_avg:.4f})")
    return 0


def cmd_eval(config: RunConfig) -> int:
    if not config.eval.checkpoint:
        raise ConfigError("eval.checkpoint is required")
    ckpt = Path(config.eval.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint {ckpt} does not exist")
    model = load_checkpoint(ckpt)
    scenes = _load_scenes(config)
    out = Path(config.out) / "metrics"
    out.mkdir(parents=True, exist_ok=True)
    summary = evaluate_scenes(
        model,
        scenes,
        tau=config.eval.tau,
        combine=config.eval.combine,
        with_clouds=config.eval.with_clouds,
    )
    for name, report in summary.per_scene.items():
        (out / f"{name}.json").write_text(report.to_json())
    (out / "summary.json").write_text(summary.pooled.to_json())
    (out / "summary.csv").write_text(
        MetricsReport.csv_header() + "\n" + summary.pooled.csv_row() + "\n"
    )
    per_scene_auc = {name: rep.auc_30 for name, rep in summary.per_scene.items()}
    (out / "per_scene.json").write_text(json.dumps(per_scene_auc, indent=2, sort_keys=True))
    print(f"eval: pooled AUC@30 {summary.pooled.auc_30:.2f} over {summary.pooled.n_pairs} pairs")
    if config.eval.sweep_grid:
        rows = tau_sweep(
            model,
            scenes,
            config.eval.sweep_grid,
            repeats=config.eval.sweep_repeats,
            seed=config.seed,
            combine=config.eval.combine,
        )
        (out / "tau_sweep.json").write_text(json.dumps(rows, indent=2))
        header = "tau,scene,repetition,auc,rra,rta,n_pairs"
        lines = [header] + [
            f"{r['tau']},{r['scene']},{r['repetition']},{r['auc']:.6g},"
            f"{r['rra']:.6g},{r['rta']:.6g},{r['n_pairs']}"
            for r in rows
        ]
        (out / "tau_sweep.csv").write_text("\n".join(lines) + "\n")
        print(f"eval: tau sweep wrote {len(rows)} rows")
    return 0


def cmd_analyze(config: RunConfig) -> int:
    out = Path(config.out) / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    wrote_anything = False
    if config.analyze.checkpoints:
        scenes = _load_scenes(config)
        for label, ckpt in sorted(config.analyze.checkpoints.items()):
            model = load_checkpoint(ckpt)
            gaps, jeffreys_final = [], []
            pca_rows = []
            for scene in scenes:
                cap = capture_layer_tokens(
                    model,
                    scene,
                    batch_size=config.analyze.batch_size,
                    tau_range=tuple(config.analyze.tau_range),
                    n_batches=config.analyze.n_batches,
                    seed=config.seed,
                )
                gaps.append(
                    analysis.cosine_gap_by_layer(
                        cap.rgb_by_layer, cap.thermal_by_layer, cap.rgb_ids, cap.thermal_ids
                    )
                )
                layer = config.analyze.pca_layer % model.config.num_blocks
                rgb_tokens = np.concatenate(cap.rgb_by_layer[layer])
                th_tokens = np.concatenate(cap.thermal_by_layer[layer])
                jeffreys_final.append(analysis.jeffreys_divergence(rgb_tokens, th_tokens))
                merged = np.concatenate([rgb_tokens, th_tokens])
                coords, ratios = analysis.pca_embed(merged, config.analyze.pca_components)
                mods = ["rgb"] * len(rgb_tokens) + ["thermal"] * len(th_tokens)
                for c, m in zip(coords, mods):
                    pca_rows.append(
                        f"{label},{scene.scene},{layer},{m},"
                        + ",".join(f"{x:.8g}" for x in c)
                    )
                del ratios
            profile = analysis.layer_cosine_profile(gaps)
            doc = {
                "profile": profile.to_dict(),
                "jeffreys_final_layer": {
                    "per_scene": [float(j) for j in jeffreys_final],
                    "median": float(np.median(jeffreys_final)),
                },
                "bootstrap_bands": {
                    str(layer): analysis.bootstrap_quantiles(
                        [float(g[layer]) for g in gaps], np.random.default_rng(config.seed)
                    )
                    for layer in range(model.config.num_blocks)
                },
            }
            (out / f"{label}_profile.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
            coord_cols = ",".join(f"pc{i + 1}" for i in range(config.analyze.pca_components))
            (out / f"{label}_pca.csv").write_text(
                f"model,scene,layer,modality,{coord_cols}\n" + "\n".join(pca_rows) + "\n"
            )
            print(f"analyze: wrote profile and PCA export for {label!r}")
            wrote_anything = True
    if config.analyze.ablation_results:
        if len(config.analyze.ablation_results) < 2:
            raise ConfigError("ablation mode needs at least two result sets")
        samples = {}
        for label, p in sorted(config.analyze.ablation_results.items()):
            doc = json.loads(Path(p).read_text())
            samples[label] = [doc[k] for k in sorted(doc)]
        names, mat = analysis.welch_matrix(samples)
        lines = ["," + ",".join(names)]
        for i, row_name in enumerate(names):
            cells = ["" if np.isnan(mat[i, j]) else f"{mat[i, j]:.4f}" for j in range(len(names))]
            lines.append(row_name + "," + ",".join(cells))
        (out / "welch_matrix.csv").write_text("\n".join(lines) + "\n")
        (out / "welch_matrix.json").write_text(
            json.dumps({"rows": names, "p_values": mat.tolist()}, indent=2)
        )
        print(f"analyze: wrote Welch p-value matrix over {names}")
        wrote_anything = True
    if not wrote_anything:
        raise ConfigError("analyze needs analyze.checkpoints and/or analyze.ablation_results")
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze}


def _parse_overrides(tokens: list[str]) -> list[str]:
    """Turn leftover ``--a.b=v`` / ``--a.b v`` tokens into ``a.b=v`` strings."""
    overrides = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            overrides.append(body)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"flag --{body} is missing a value")
            overrides.append(f"{body}={tokens[i + 1]}")
            i += 2
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rtmv",
        description="RGB+thermal multi-view geometry: synthesize, train, evaluate, analyze.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--force", action="store_true")
    args, leftover = parser.parse_known_args(argv)
    try:
        overrides = _parse_overrides(leftover)
        config = load_config(args.config, overrides)
        if args.seed is not None:
            config.seed = args.seed
        if args.out is not None:
            config.out = args.out
        if args.force:
            config.force = True
        write_config_snapshot(config, config.out)
        return COMMANDS[args.command](config)
    except TrainingAbort as e:
        print(f"error: training aborted: {e}", file=sys.stderr)
        return RUNTIME_EXIT
    except RtmvError as e:
        print(f"error: {e}", file=sys.stderr)
        return VALIDATION_EXIT
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: unexpected failure: {e}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
