"""Parameter accounting, counted two independent ways.

Route 1 (`shape_registry`) structurally enumerates every tensor the
architecture owns, mirroring module construction name-by-name; for desk-scale
configs it is pinned against instantiated models in the test suite.
Route 2 (`closed_form_counts`) is plain algebra over the same dimensions.
The two must agree exactly.

At paper scale the upstream feature extractor is a frozen 24-block, 1024-wide
ViT; the registry models it explicitly (entries under ``tokenizer.vit``) so the
trainable ratio is taken against the full original model's size.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

from .adapters import ALL_SUBLAYERS, LoraConfig
from .errors import ConfigError
from .model import ModelConfig


@dataclass
class ParamEntry:
    name: str
    shape: tuple
    trainable: bool

    @property
    def numel(self) -> int:
        return prod(self.shape)


@dataclass
class CensusSpec:
    embed_dim: int
    num_blocks: int
    mlp_ratio: float
    patch_size: int
    n_taps: int
    hidden: int
    token_mode: str = "per-modality-token"
    tokenizer_vit_blocks: int = 0  # 0 = plain linear patch embedding

    @classmethod
    def from_model_config(cls, cfg: ModelConfig) -> "CensusSpec":
        return cls(
            embed_dim=cfg.embed_dim,
            num_blocks=cfg.num_blocks,
            mlp_ratio=cfg.mlp_ratio,
            patch_size=cfg.patch_size,
            n_taps=len(cfg.tap_indices()),
            hidden=cfg.hidden,
            token_mode=cfg.token_mode,
        )

    @classmethod
    def paper_scale(cls) -> "CensusSpec":
        return cls(
            embed_dim=1024,
            num_blocks=24,
            mlp_ratio=4.0,
            patch_size=14,
            n_taps=4,
            hidden=2048,
            token_mode="per-modality-token",
            tokenizer_vit_blocks=24,
        )

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)


def _block_entries(prefix: str, d: int, m: int, trainable: bool) -> list[ParamEntry]:
    e = ParamEntry
    return [
        e(f"{prefix}.norm1.weight", (d,), trainable),
        e(f"{prefix}.norm1.bias", (d,), trainable),
        e(f"{prefix}.attn.q.weight", (d, d), trainable),
        e(f"{prefix}.attn.q.bias", (d,), trainable),
        e(f"{prefix}.attn.k.weight", (d, d), trainable),
        e(f"{prefix}.attn.k.bias", (d,), trainable),
        e(f"{prefix}.attn.v.weight", (d, d), trainable),
        e(f"{prefix}.attn.v.bias", (d,), trainable),
        e(f"{prefix}.attn.out.weight", (d, d), trainable),
        e(f"{prefix}.attn.out.bias", (d,), trainable),
        e(f"{prefix}.norm2.weight", (d,), trainable),
        e(f"{prefix}.norm2.bias", (d,), trainable),
        e(f"{prefix}.mlp.fc1.weight", (m, d), trainable),
        e(f"{prefix}.mlp.fc1.bias", (m,), trainable),
        e(f"{prefix}.mlp.fc2.weight", (d, m), trainable),
        e(f"{prefix}.mlp.fc2.bias", (d,), trainable),
    ]


_SUBLAYER_PATH = {
    "attention-q": "attn.q",
    "attention-k": "attn.k",
    "attention-v": "attn.v",
    "attention-out": "attn.out",
    "mlp-in": "mlp.fc1",
    "mlp-out": "mlp.fc2",
}


def _sublayer_dims(sub: str, d: int, m: int) -> tuple[int, int]:
    if sub == "mlp-in":
        return d, m
    if sub == "mlp-out":
        return m, d
    return d, d


def shape_registry(
    spec: CensusSpec,
    lora: LoraConfig | None = None,
    train_heads: bool = False,
    freeze_tokenizer: bool = False,
) -> list[ParamEntry]:
    """Every parameter tensor of the architecture, with fine-tune trainability.

    Without `lora` the model is in pretraining state (everything trainable
    except an optionally frozen tokenizer). With `lora`, only adapters, the
    token-mode adaptation parameters, and optionally the heads are trainable.
    """
    d, m, h, p = spec.embed_dim, spec.mlp_hidden, spec.hidden, spec.patch_size
    adapted = lora is not None
    base_trainable = not adapted
    entries: list[ParamEntry] = []
    tok_trainable = base_trainable and not freeze_tokenizer
    entries.append(ParamEntry("tokenizer.proj.weight", (d, 3 * p * p), tok_trainable))
    entries.append(ParamEntry("tokenizer.proj.bias", (d,), tok_trainable))
    for i in range(spec.tokenizer_vit_blocks):
        entries += _block_entries(f"tokenizer.vit.{i}", d, m, tok_trainable)
    mode = spec.token_mode
    thermal_trainable = adapted and mode == "per-modality-token"
    rgb_trainable = (adapted and mode == "shared-token") or base_trainable
    entries += [
        ParamEntry("token_bank.rgb_first", (d,), rgb_trainable),
        ParamEntry("token_bank.rgb_rest", (d,), rgb_trainable),
        ParamEntry("token_bank.thermal_first", (d,), thermal_trainable or base_trainable),
        ParamEntry("token_bank.thermal_rest", (d,), thermal_trainable or base_trainable),
    ]
    if mode == "thermal-projector":
        entries.append(
            ParamEntry("thermal_projector.weight", (d, d), adapted or base_trainable)
        )
    if mode == "thermal-embedding":
        entries.append(ParamEntry("thermal_embedding", (d,), adapted or base_trainable))
    for i in range(spec.num_blocks):
        scope = "frame" if i % 2 == 0 else "global"
        block = _block_entries(f"blocks.{i}", d, m, base_trainable)
        if adapted and lora.targets_scope(scope):
            adapted_paths = {_SUBLAYER_PATH[s] for s in lora.sublayers}
            renamed = []
            for entry in block:
                tail = entry.name.split(f"blocks.{i}.", 1)[1]
                path, _, leaf = tail.rpartition(".")
                if path in adapted_paths:
                    entry = ParamEntry(
                        f"blocks.{i}.{path}.base.{leaf}", entry.shape, False
                    )
                renamed.append(entry)
            block = renamed
            for sub in lora.sublayers:
                d_in, d_out = _sublayer_dims(sub, d, m)
                path = _SUBLAYER_PATH[sub]
                block.append(
                    ParamEntry(f"blocks.{i}.{path}.A", (lora.rank, d_in), True)
                )
                block.append(
                    ParamEntry(f"blocks.{i}.{path}.B", (d_out, lora.rank), True)
                )
        entries += block
    entries += [
        ParamEntry("norm_out.weight", (d,), base_trainable),
        ParamEntry("norm_out.bias", (d,), base_trainable),
    ]
    heads_trainable = base_trainable or train_heads
    entries += [
        ParamEntry("camera_head.0.weight", (h, d), heads_trainable),
        ParamEntry("camera_head.0.bias", (h,), heads_trainable),
        ParamEntry("camera_head.2.weight", (9, h), heads_trainable),
        ParamEntry("camera_head.2.bias", (9,), heads_trainable),
        ParamEntry("depth_head.0.weight", (h, spec.n_taps * d), heads_trainable),
        ParamEntry("depth_head.0.bias", (h,), heads_trainable),
        ParamEntry("depth_head.2.weight", (p * p * 2, h), heads_trainable),
        ParamEntry("depth_head.2.bias", (p * p * 2,), heads_trainable),
    ]
    return entries


def registry_counts(entries: list[ParamEntry]) -> tuple[int, int]:
    trainable = sum(e.numel for e in entries if e.trainable)
    total = sum(e.numel for e in entries)
    return trainable, total


def closed_form_counts(
    spec: CensusSpec,
    lora: LoraConfig | None = None,
    train_heads: bool = False,
    freeze_tokenizer: bool = False,
) -> tuple[int, int]:
    """Algebraic route for the same counts; must agree with the registry exactly."""
    d, m, h, p = spec.embed_dim, spec.mlp_hidden, spec.hidden, spec.patch_size

    block = 4 * d + 4 * (d * d + d) + (m * d + m) + (d * m + d)  # norms, attn, mlp
    tokenizer = (3 * p * p * d + d) + spec.tokenizer_vit_blocks * block
    bank = 4 * d
    mode_extra = d * d if spec.token_mode == "thermal-projector" else (
        d if spec.token_mode == "thermal-embedding" else 0
    )
    heads = (h * d + h) + (9 * h + 9) + (h * spec.n_taps * d + h) + (2 * p * p * h + 2 * p * p)
    base_total = tokenizer + bank + mode_extra + spec.num_blocks * block + 2 * d + heads

    if lora is None:
        trainable = base_total - (tokenizer if freeze_tokenizer else 0)
        return trainable, base_total

    n_blocks = spec.num_blocks if lora.target == "both" else spec.num_blocks // 2
    per_block_adapter = 0
    for sub in lora.sublayers:
        d_in, d_out = _sublayer_dims(sub, d, m)
        per_block_adapter += lora.rank * (d_in + d_out)
    adapters = n_blocks * per_block_adapter
    mode_trainable = {
        "per-modality-token": 2 * d,
        "shared-token": 2 * d,
        "thermal-projector": d * d,
        "thermal-embedding": d,
        "no-token": 0,
    }[spec.token_mode]
    trainable = adapters + mode_trainable + (heads if train_heads else 0)
    return trainable, base_total + adapters


def symbolic_trainable_fraction(
    spec: CensusSpec, lora: LoraConfig, train_heads: bool = False
) -> float:
    """Fraction via the registry route, cross-checked against the closed form."""
    reg = registry_counts(shape_registry(spec, lora, train_heads))
    alg = closed_form_counts(spec, lora, train_heads)
    if reg != alg:
        raise ConfigError(f"census routes disagree: registry {reg} vs closed form {alg}")
    return reg[0] / reg[1]


def paper_scale_lora() -> LoraConfig:
    return LoraConfig(rank=64, alpha=128.0, target="both", sublayers=ALL_SUBLAYERS)
