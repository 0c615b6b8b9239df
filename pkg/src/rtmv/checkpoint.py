"""Checkpoint archives.

A checkpoint is a single ``.npz`` archive (a zip of ``.npy`` members) holding:

* ``__meta__``          JSON record: format tag, version, model config, and the
                        adapter config + train_heads flag when adapters are present.
* ``base/<param>``      one little-endian float32 array per base parameter, named
                        by the pre-injection parameter path (``blocks.0.attn.q.weight`` ...).
* ``adapter/<path>.A``  adapter matrices, stored apart from the base weights so a
* ``adapter/<path>.B``  fine-tuned adapter set can be loaded onto a matching base.
* ``extra/<param>``     token-bank / projector / embedding / head tensors that the
                        fine-tuning recipe trains alongside the adapters.

Adapter-only archives carry ``__meta__``, ``adapter/*`` and ``extra/*`` members only.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import torch

from .adapters import LoraConfig, LoraLinear, inject
from .errors import ConfigError
from .model import GeometryTransformer, ModelConfig

FORMAT_TAG = "rtmv-checkpoint"
ADAPTER_TAG = "rtmv-adapters"
VERSION = 1


def _meta_for(model: GeometryTransformer, tag: str) -> dict:
    lora = getattr(model, "lora_config", None)
    return {
        "format": tag,
        "version": VERSION,
        "model": dataclasses.asdict(model.config),
        "lora": None if lora is None else dataclasses.asdict(lora),
        "train_heads": bool(
            lora is not None and model.camera_head[0].weight.requires_grad
        ),
    }


def _split_param_names(model: GeometryTransformer):
    """(canonical base name, adapter name, extra name) triples for every tensor."""
    base, adapter, extra = {}, {}, {}
    adapted_extra = set()
    if getattr(model, "lora_config", None) is not None:
        adapted_extra = {id(p) for p in model.modality_adaptation_parameters()}
        if model.camera_head[0].weight.requires_grad:
            adapted_extra |= {id(p) for p in model.camera_head.parameters()}
            adapted_extra |= {id(p) for p in model.depth_head.parameters()}
    for name, p in model.named_parameters():
        if name.endswith(".A") or name.endswith(".B"):
            adapter[name] = p
        elif id(p) in adapted_extra:
            extra[name] = p
        else:
            base[name.replace(".base.", ".")] = p
    return base, adapter, extra


def _to_array(p: torch.Tensor) -> np.ndarray:
    return p.detach().cpu().numpy().astype("<f4")


def save_checkpoint(model: GeometryTransformer, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base, adapter, extra = _split_param_names(model)
    arrays = {f"base/{k}": _to_array(v) for k, v in base.items()}
    arrays |= {f"adapter/{k}": _to_array(v) for k, v in adapter.items()}
    arrays |= {f"extra/{k}": _to_array(v) for k, v in extra.items()}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(_meta_for(model, FORMAT_TAG)).encode(), dtype=np.uint8
    )
    np.savez(path, **arrays)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def save_adapters(model: GeometryTransformer, path: str | Path) -> Path:
    if getattr(model, "lora_config", None) is None:
        raise ConfigError("model has no adapters to save")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _, adapter, extra = _split_param_names(model)
    arrays = {f"adapter/{k}": _to_array(v) for k, v in adapter.items()}
    arrays |= {f"extra/{k}": _to_array(v) for k, v in extra.items()}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(_meta_for(model, ADAPTER_TAG)).encode(), dtype=np.uint8
    )
    np.savez(path, **arrays)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def _read_meta(archive) -> dict:
    return json.loads(bytes(archive["__meta__"]).decode())


def _assign(model: GeometryTransformer, flat: dict[str, np.ndarray]):
    params = dict(model.named_parameters())
    missing = set(params) - set(flat)
    unexpected = set(flat) - set(params)
    if missing or unexpected:
        raise ConfigError(
            f"checkpoint/model mismatch: missing {sorted(missing)[:4]}, "
            f"unexpected {sorted(unexpected)[:4]}"
        )
    with torch.no_grad():
        for name, p in params.items():
            arr = flat[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr.copy()).to(p.dtype))


def load_checkpoint(path: str | Path) -> GeometryTransformer:
    """Rebuild the model (re-injecting adapters when present) and load weights."""
    with np.load(path) as archive:
        meta = _read_meta(archive)
        if meta.get("format") != FORMAT_TAG:
            raise ConfigError(f"not a model checkpoint: {meta.get('format')}")
        model = GeometryTransformer(ModelConfig(**_tupled(meta["model"])))
        if meta["lora"] is not None:
            inject(model, LoraConfig(**_tupled(meta["lora"])), train_heads=meta["train_heads"])
        flat = {}
        for key in archive.files:
            if key == "__meta__":
                continue
            section, name = key.split("/", 1)
            if section == "base":
                name = _base_to_model_name(model, name)
            flat[name] = archive[key]
        _assign(model, flat)
    return model


def load_adapters(model: GeometryTransformer, path: str | Path):
    """Load an adapter-only archive onto a base model with matching dimensions."""
    with np.load(path) as archive:
        meta = _read_meta(archive)
        if meta.get("format") != ADAPTER_TAG:
            raise ConfigError(f"not an adapter archive: {meta.get('format')}")
        if getattr(model, "lora_config", None) is None:
            inject(model, LoraConfig(**_tupled(meta["lora"])), train_heads=meta["train_heads"])
        params = dict(model.named_parameters())
        with torch.no_grad():
            for key in archive.files:
                if key == "__meta__":
                    continue
                _, name = key.split("/", 1)
                if name not in params:
                    raise ConfigError(f"adapter archive names unknown parameter {name}")
                arr = archive[key]
                if tuple(arr.shape) != tuple(params[name].shape):
                    raise ConfigError(f"dimension mismatch for {name}")
                params[name].copy_(torch.from_numpy(arr.copy()).to(params[name].dtype))
    return model


def _base_to_model_name(model: GeometryTransformer, canonical: str) -> str:
    """Map a canonical base name onto the (possibly adapter-wrapped) module tree."""
    params = dict(model.named_parameters())
    if canonical in params:
        return canonical
    head, _, leaf = canonical.rpartition(".")
    wrapped = f"{head}.base.{leaf}"
    if wrapped in params:
        return wrapped
    raise ConfigError(f"checkpoint parameter {canonical} not found in model")


def _tupled(record: dict) -> dict:
    """JSON round-trips tuples as lists; restore hashable tuples for configs."""
    return {k: tuple(v) if isinstance(v, list) else v for k, v in record.items()}
