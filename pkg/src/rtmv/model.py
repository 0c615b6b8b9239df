"""Miniature alternating-attention multi-view geometry transformer.

Patch tokens plus one camera token per frame flow through a stack of blocks that
alternate frame-wise self-attention (tokens of one image) with global
self-attention (tokens of all frames in the same sequence). The final camera
token feeds a pose head; patch tokens tapped at configured depths feed an
uncertainty-aware depth head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, InvalidInputError

TOKEN_MODES = (
    "per-modality-token",
    "shared-token",
    "no-token",
    "thermal-projector",
    "thermal-embedding",
)

RGB = "rgb"
THERMAL = "thermal"


@dataclass
class ModelConfig:
    patch_size: int = 8
    embed_dim: int = 64
    num_blocks: int = 6
    num_heads: int = 4
    mlp_ratio: float = 4.0
    head_tap_fractions: tuple = (1 / 6, 1 / 2, 3 / 4, 23 / 24)
    token_mode: str = "per-modality-token"
    head_hidden_dim: int | None = None
    freeze_tokenizer: bool = False

    def __post_init__(self):
        if self.num_blocks % 2 != 0 or self.num_blocks < 2:
            raise ConfigError("num_blocks must be even and >= 2 (alternation pairs)")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError("embed_dim must be divisible by num_heads")
        if self.embed_dim % 4 != 0:
            raise ConfigError("embed_dim must be divisible by 4 for 2-D position encoding")
        if not all(0.0 < f <= 1.0 for f in self.head_tap_fractions):
            raise ConfigError("head_tap_fractions must lie in (0, 1]")
        if self.token_mode not in TOKEN_MODES:
            raise ConfigError(f"unknown token_mode {self.token_mode!r}")

    @property
    def hidden(self) -> int:
        return self.head_hidden_dim or 2 * self.embed_dim

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    def tap_indices(self) -> tuple[int, ...]:
        """0-indexed blocks whose outputs feed the depth head (ceil(f * depth), deduplicated)."""
        idx = sorted({math.ceil(f * self.num_blocks) - 1 for f in self.head_tap_fractions})
        return tuple(max(0, i) for i in idx)

    def block_scope(self, i: int) -> str:
        """Alternation order: frame-wise first, then global, repeating."""
        return "frame" if i % 2 == 0 else "global"


def sincos_position_encoding(h: int, w: int, dim: int) -> torch.Tensor:
    """Fixed 2-D sinusoidal encoding, (h*w, dim); half the channels per axis."""
    if dim % 4 != 0:
        raise InvalidInputError("position encoding dim must be divisible by 4")
    half = dim // 2

    def axis(pos: torch.Tensor) -> torch.Tensor:
        omega = torch.arange(half // 2, dtype=torch.float64) / (half / 2.0)
        omega = 1.0 / 10000.0**omega
        out = pos[:, None] * omega[None, :]
        return torch.cat([torch.sin(out), torch.cos(out)], dim=1)

    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=torch.float64), torch.arange(w, dtype=torch.float64), indexing="ij"
    )
    return torch.cat([axis(ys.reshape(-1)), axis(xs.reshape(-1))], dim=1)


class PatchTokenizer(nn.Module):
    """Learned linear embedding of non-overlapping patches plus sinusoidal positions."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.patch_size = config.patch_size
        self.embed_dim = config.embed_dim
        self.proj = nn.Linear(3 * config.patch_size**2, config.embed_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(F, 3, H, W) -> (F, P, D) with P = (H/patch) * (W/patch)."""
        f, c, h, w = images.shape
        p = self.patch_size
        if h % p != 0 or w % p != 0:
            raise InvalidInputError(f"image {h}x{w} not divisible by patch size {p}")
        patches = images.reshape(f, c, h // p, p, w // p, p)
        patches = patches.permute(0, 2, 4, 1, 3, 5).reshape(f, (h // p) * (w // p), c * p * p)
        tokens = self.proj(patches)
        pos = sincos_position_encoding(h // p, w // p, self.embed_dim)
        return tokens + pos.to(dtype=tokens.dtype, device=tokens.device)


class CameraTokenBank(nn.Module):
    """Four learnable camera tokens; thermal tokens start as exact RGB copies."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.rgb_first = nn.Parameter(torch.randn(embed_dim) * 0.02)
        self.rgb_rest = nn.Parameter(torch.randn(embed_dim) * 0.02)
        self.thermal_first = nn.Parameter(self.rgb_first.detach().clone())
        self.thermal_rest = nn.Parameter(self.rgb_rest.detach().clone())

    @torch.no_grad()
    def copy_rgb_to_thermal(self):
        self.thermal_first.copy_(self.rgb_first)
        self.thermal_rest.copy_(self.rgb_rest)

    def select(self, modality: str, is_first: bool, token_mode: str) -> torch.Tensor:
        if token_mode == "per-modality-token" and modality == THERMAL:
            return self.thermal_first if is_first else self.thermal_rest
        # shared-token, no-token, thermal-projector, and thermal-embedding all
        # use the RGB pair for every frame
        return self.rgb_first if is_first else self.rgb_rest


class SelfAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        hd = d // self.num_heads

        def split(y):
            return y.reshape(b, t, self.num_heads, hd).transpose(1, 2)

        attn = F.scaled_dot_product_attention(split(self.q(x)), split(self.k(x)), split(self.v(x)))
        return self.out(attn.transpose(1, 2).reshape(b, t, d))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class AttentionBlock(nn.Module):
    """Pre-norm transformer block; `scope` selects frame-wise or global attention."""

    def __init__(self, config: ModelConfig, scope: str):
        super().__init__()
        self.scope = scope
        self.norm1 = nn.LayerNorm(config.embed_dim)
        self.attn = SelfAttention(config.embed_dim, config.num_heads)
        self.norm2 = nn.LayerNorm(config.embed_dim)
        self.mlp = Mlp(config.embed_dim, config.mlp_hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


@dataclass
class ModelOutput:
    pose_enc: torch.Tensor  # (F, 9): unit quaternion, translation, fov (radians)
    depth: torch.Tensor  # (F, H, W), strictly positive
    log_sigma: torch.Tensor  # (F, H, W)
    layer_outputs: list = field(default_factory=list)  # per-block (F, T, D)
    final_tokens: torch.Tensor | None = None


class GeometryTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tokenizer = PatchTokenizer(config)
        self.token_bank = CameraTokenBank(config.embed_dim)
        if config.token_mode == "thermal-projector":
            self.thermal_projector = nn.Linear(config.embed_dim, config.embed_dim, bias=False)
            with torch.no_grad():
                self.thermal_projector.weight.copy_(torch.eye(config.embed_dim))
        else:
            self.thermal_projector = None
        if config.token_mode == "thermal-embedding":
            self.thermal_embedding = nn.Parameter(torch.zeros(config.embed_dim))
        else:
            self.thermal_embedding = None
        self.blocks = nn.ModuleList(
            AttentionBlock(config, config.block_scope(i)) for i in range(config.num_blocks)
        )
        self.norm_out = nn.LayerNorm(config.embed_dim)
        self.camera_head = nn.Sequential(
            nn.Linear(config.embed_dim, config.hidden), nn.GELU(), nn.Linear(config.hidden, 9)
        )
        n_taps = len(self.config.tap_indices())
        self.depth_head = nn.Sequential(
            nn.Linear(n_taps * config.embed_dim, config.hidden),
            nn.GELU(),
            nn.Linear(config.hidden, config.patch_size**2 * 2),
        )
        if config.freeze_tokenizer:
            for p in self.tokenizer.parameters():
                p.requires_grad_(False)

    # -- tokenization ------------------------------------------------------

    def prepare_images(self, images: Sequence) -> torch.Tensor:
        """Stack per-frame arrays into (F, 3, H, W); thermal 1-channel replicated."""
        ref_dtype = next(self.parameters()).dtype
        out = []
        for img in images:
            t = torch.as_tensor(np.asarray(img), dtype=ref_dtype)
            if t.ndim == 2:
                t = t[None].expand(3, -1, -1).clone()
            elif t.ndim == 3 and t.shape[-1] in (1, 3):
                t = t.permute(2, 0, 1)
                if t.shape[0] == 1:
                    t = t.expand(3, -1, -1).clone()
            else:
                raise InvalidInputError(f"unsupported image shape {tuple(t.shape)}")
            out.append(t)
        return torch.stack(out)

    def tokenize(self, image) -> torch.Tensor:
        """Single image (H, W), (H, W, 1) or (H, W, 3) -> (P, D) patch tokens."""
        return self.tokenizer(self.prepare_images([image]))[0]

    def attach_camera_token(
        self, patch_tokens: torch.Tensor, modality: str, is_first: bool
    ) -> torch.Tensor:
        """Prepend the configured camera token; apply thermal projector/embedding modes."""
        if modality not in (RGB, THERMAL):
            raise InvalidInputError(f"unknown modality {modality!r}")
        mode = self.config.token_mode
        if modality == THERMAL:
            if mode == "thermal-projector":
                patch_tokens = self.thermal_projector(patch_tokens)
            elif mode == "thermal-embedding":
                patch_tokens = patch_tokens + self.thermal_embedding
        cam = self.token_bank.select(modality, is_first, mode)
        return torch.cat([cam[None, :], patch_tokens], dim=0)

    # -- attention stack ----------------------------------------------------

    def aa_forward(
        self, tokens: torch.Tensor, seq_lengths: Sequence[int]
    ) -> list[torch.Tensor]:
        """Run the alternating stack; returns every block's output, (F, T, D) each."""
        f, t, d = tokens.shape
        if sum(seq_lengths) != f:
            raise InvalidInputError("sequence partition must cover all frames")
        outputs = []
        x = tokens
        for block in self.blocks:
            if block.scope == "frame":
                x = block(x)
            else:
                x = self._global_attend(block, x, seq_lengths)
            outputs.append(x)
        return outputs

    def _global_attend(self, block, x: torch.Tensor, seq_lengths: Sequence[int]) -> torch.Tensor:
        f, t, d = x.shape
        lengths = list(seq_lengths)
        if len(set(lengths)) == 1:
            s, length = len(lengths), lengths[0]
            y = block(x.reshape(s, length * t, d))
            return y.reshape(f, t, d)
        chunks, start = [], 0
        for length in lengths:
            seg = x[start : start + length].reshape(1, length * t, d)
            chunks.append(block(seg).reshape(length, t, d))
            start += length
        return torch.cat(chunks, dim=0)

    # -- heads ---------------------------------------------------------------

    def camera_encodings(self, camera_tokens: torch.Tensor) -> torch.Tensor:
        """(F, D) final camera tokens -> (F, 9) pose encodings.

        Quaternion part is normalized; fov passes through a sigmoid scaled to (0, pi).
        """
        raw = self.camera_head(camera_tokens)
        quat = F.normalize(raw[:, :4], dim=1, eps=1e-8)
        fov = torch.sigmoid(raw[:, 7:9]) * math.pi
        return torch.cat([quat, raw[:, 4:7], fov], dim=1)

    def depth_from_layers(
        self, layer_outputs: Sequence[torch.Tensor], image_hw: tuple[int, int]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Tap configured layers' patch tokens -> full-resolution (depth, log_sigma)."""
        h, w = image_hw
        p = self.config.patch_size
        taps = self.config.tap_indices()
        feats = torch.cat([layer_outputs[i][:, 1:, :] for i in taps], dim=-1)
        raw = self.depth_head(feats)  # (F, P, p*p*2)
        f = raw.shape[0]
        gh, gw = h // p, w // p
        raw = raw.reshape(f, gh, gw, p, p, 2).permute(0, 1, 3, 2, 4, 5).reshape(f, h, w, 2)
        return torch.exp(raw[..., 0]), raw[..., 1]

    # -- full forward ----------------------------------------------------------

    def forward(
        self,
        images: Sequence,
        modalities: Sequence[str],
        seq_lengths: Sequence[int],
        want_layers: bool = False,
    ) -> ModelOutput:
        pixel = images if torch.is_tensor(images) else self.prepare_images(images)
        f, _, h, w = pixel.shape
        if len(modalities) != f:
            raise InvalidInputError("one modality tag per frame required")
        patch_tokens = self.tokenizer(pixel)
        frames = []
        pos_in_seq = 0
        seq_iter = iter(seq_lengths)
        remaining = next(seq_iter)
        for i in range(f):
            frames.append(
                self.attach_camera_token(patch_tokens[i], modalities[i], pos_in_seq == 0)
            )
            pos_in_seq += 1
            remaining -= 1
            if remaining == 0 and i + 1 < f:
                remaining = next(seq_iter)
                pos_in_seq = 0
        tokens = torch.stack(frames)
        layer_outputs = self.aa_forward(tokens, seq_lengths)
        final = self.norm_out(layer_outputs[-1])
        pose_enc = self.camera_encodings(final[:, 0, :])
        depth, log_sigma = self.depth_from_layers(layer_outputs, (h, w))
        return ModelOutput(
            pose_enc=pose_enc,
            depth=depth,
            log_sigma=log_sigma,
            layer_outputs=list(layer_outputs) if want_layers else [],
            final_tokens=final,
        )

    # -- adaptation bookkeeping --------------------------------------------------

    def modality_adaptation_parameters(self) -> list[nn.Parameter]:
        """Parameters that the fine-tuning recipe trains for the configured token mode."""
        mode = self.config.token_mode
        if mode == "per-modality-token":
            return [self.token_bank.thermal_first, self.token_bank.thermal_rest]
        if mode == "shared-token":
            return [self.token_bank.rgb_first, self.token_bank.rgb_rest]
        if mode == "thermal-projector":
            return [self.thermal_projector.weight]
        if mode == "thermal-embedding":
            return [self.thermal_embedding]
        return []  # no-token

    @torch.no_grad()
    def reset_modality_adaptation(self):
        """Restore the adaptation-neutral state: thermal=RGB, projector=I, embedding=0."""
        self.token_bank.copy_rgb_to_thermal()
        if self.thermal_projector is not None:
            self.thermal_projector.weight.copy_(
                torch.eye(self.config.embed_dim, dtype=self.thermal_projector.weight.dtype)
            )
        if self.thermal_embedding is not None:
            self.thermal_embedding.zero_()


def build_model(config: ModelConfig, seed: int = 0) -> GeometryTransformer:
    """Deterministically initialized model; same (config, seed) -> same weights."""
    torch.manual_seed(seed)
    return GeometryTransformer(config)
