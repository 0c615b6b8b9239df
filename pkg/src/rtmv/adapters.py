"""Low-rank adapter injection for the alternating-attention stack.

Injection wraps selected linear sublayers with a frozen base plus a trainable
rank-r update (alpha/r) * B @ A, B zero-initialized so the adapted model starts
exactly equal to the base. Targets can be all blocks, global-only, or
frame-only; sublayers default to every attention projection and MLP linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import torch
import torch.nn.functional as F
from torch import nn

from .errors import AdapterStateError, ConfigError
from .model import GeometryTransformer

ALL_SUBLAYERS = (
    "attention-q",
    "attention-k",
    "attention-v",
    "attention-out",
    "mlp-in",
    "mlp-out",
)

TARGETS = ("both", "global-only", "frame-only")

_SUBLAYER_ATTRS = {
    "attention-q": ("attn", "q"),
    "attention-k": ("attn", "k"),
    "attention-v": ("attn", "v"),
    "attention-out": ("attn", "out"),
    "mlp-in": ("mlp", "fc1"),
    "mlp-out": ("mlp", "fc2"),
}


@dataclass
class LoraConfig:
    rank: int = 8
    alpha: float = 16.0
    target: str = "both"
    sublayers: tuple = ALL_SUBLAYERS

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}")
        self.sublayers = tuple(self.sublayers)
        unknown = set(self.sublayers) - set(ALL_SUBLAYERS)
        if unknown:
            raise ConfigError(f"unknown sublayers {sorted(unknown)}")

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def targets_scope(self, scope: str) -> bool:
        return self.target == "both" or self.target == f"{scope}-only"


class LoraLinear(nn.Module):
    """Frozen linear plus trainable (alpha/r) * B @ A; B = 0 at initialization."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        d_out, d_in = base.weight.shape
        self.A = nn.Parameter(torch.empty(rank, d_in, dtype=base.weight.dtype))
        nn.init.kaiming_uniform_(self.A, a=math.sqrt(5))
        self.B = nn.Parameter(torch.zeros(d_out, rank, dtype=base.weight.dtype))
        self.scaling = alpha / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * F.linear(F.linear(x, self.A), self.B)


def adapted_apply(layer: LoraLinear, x: torch.Tensor) -> torch.Tensor:
    """W x + b + (alpha/r) B (A x)."""
    return layer(x)


def merge(layer: LoraLinear) -> torch.Tensor:
    """Dense equivalent weight W + (alpha/r) B A."""
    return layer.base.weight + layer.scaling * layer.B @ layer.A


def iter_target_layers(
    model: GeometryTransformer, config: LoraConfig
) -> Iterable[tuple[str, nn.Module, str]]:
    """(registry name, parent module, attribute) for every targeted sublayer."""
    for i, block in enumerate(model.blocks):
        if not config.targets_scope(block.scope):
            continue
        for sub in config.sublayers:
            owner_attr, leaf = _SUBLAYER_ATTRS[sub]
            yield f"blocks.{i}.{owner_attr}.{leaf}", getattr(block, owner_attr), leaf


def inject(
    model: GeometryTransformer, config: LoraConfig, train_heads: bool = False
) -> dict[str, LoraLinear]:
    """Attach adapters, freeze the base, and mark the fine-tuning parameter set.

    Trainable afterwards: adapter A/B everywhere targeted, the token-mode
    adaptation parameters (thermal tokens, shared tokens, projector, or
    embedding), and the prediction heads when train_heads is set. The
    adaptation state is reset to neutral (thermal=RGB, projector=I,
    embedding=0) so the adapted model starts identical to the base.
    """
    if any(isinstance(m, LoraLinear) for m in model.modules()):
        raise AdapterStateError("model already carries adapters")
    for p in model.parameters():
        p.requires_grad_(False)
    registry: dict[str, LoraLinear] = {}
    for name, owner, leaf in iter_target_layers(model, config):
        wrapped = LoraLinear(getattr(owner, leaf), config.rank, config.alpha)
        setattr(owner, leaf, wrapped)
        registry[name] = wrapped
    model.reset_modality_adaptation()
    for p in model.modality_adaptation_parameters():
        p.requires_grad_(True)
    if train_heads:
        for p in model.camera_head.parameters():
            p.requires_grad_(True)
        for p in model.depth_head.parameters():
            p.requires_grad_(True)
    model.lora_config = config
    model.adapters = registry
    return registry


def trainable_fraction(model: nn.Module) -> float:
    """(count of trainable scalars) / (count of all scalars)."""
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    return trainable / total


def trainable_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]
