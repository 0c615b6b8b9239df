"""Run configuration: one JSON document, nested dataclasses, dotted overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import get_args, get_origin

from .adapters import LoraConfig
from .data import AugmentConfig
from .errors import ConfigError
from .model import ModelConfig
from .synth import SyntheticSceneConfig
from .training import LossWeights, OptimConfig


@dataclass
class DataConfig:
    scenes: tuple = ()  # scene manifest paths (or scene directories)


@dataclass
class SynthConfig:
    n_scenes: int = 2
    scene: SyntheticSceneConfig = field(default_factory=SyntheticSceneConfig)


@dataclass
class TrainConfig:
    mode: str = "finetune"  # "pretrain" trains everything on RGB-only batches
    init_checkpoint: str = ""  # base weights to start from (required for finetune)
    train_heads: bool = False
    resume: bool = False

    def __post_init__(self):
        if self.mode not in ("pretrain", "finetune"):
            raise ConfigError(f"unknown train mode {self.mode!r}")


@dataclass
class EvalConfig:
    checkpoint: str = ""
    tau: float = 0.5
    combine: str = "min"
    with_clouds: bool = True
    sweep_grid: tuple = ()  # nonempty grid switches on tau-sweep mode
    sweep_repeats: int = 3


@dataclass
class AnalyzeConfig:
    checkpoints: dict = field(default_factory=dict)  # label -> checkpoint path
    batch_size: int = 12
    tau_range: tuple = (0.25, 0.75)
    n_batches: int = 2
    pca_layer: int = -1  # layer whose tokens are exported as PCA coordinates
    pca_components: int = 2
    ablation_results: dict = field(default_factory=dict)  # label -> per-scene metrics json


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/out"
    force: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    lora: LoraConfig = field(default_factory=LoraConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    analyze: AnalyzeConfig = field(default_factory=AnalyzeConfig)


def _from_dict(cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        ftype = fields[name].type
        resolved = _resolve_type(cls, ftype)
        if dataclasses.is_dataclass(resolved):
            kwargs[name] = _from_dict(resolved, value)
        elif isinstance(value, list):
            kwargs[name] = tuple(
                tuple(v) if isinstance(v, list) else v for v in value
            )
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _resolve_type(cls, ftype):
    if isinstance(ftype, str):
        import typing

        module = __import__(cls.__module__, fromlist=["_"])
        ctx = {**vars(typing), **vars(module), **globals()}
        try:
            ftype = eval(ftype, ctx)  # dataclass field annotations arrive as strings
        except Exception:
            return None
    if get_origin(ftype) is not None and type(None) in get_args(ftype):
        args = [a for a in get_args(ftype) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return ftype


def config_to_dict(config) -> dict:
    return dataclasses.asdict(config)


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, optionally overlaid by a JSON file, then dotted-path overrides."""
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
    for item in overrides or []:
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"override {item!r} must look like path.to.key=value")
        _set_dotted(doc, key.strip(), _parse_value(value.strip()))
    base = config_to_dict(RunConfig())
    merged = _deep_merge(base, doc)
    return _from_dict(RunConfig, merged)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(doc: dict, dotted: str, value):
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {part!r}")
    node[parts[-1]] = value


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def write_config_snapshot(config: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True))
    return path
