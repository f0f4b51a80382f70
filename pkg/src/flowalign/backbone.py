"""Toy latent diffusion transformer.

Patchifies a [C,H,W] latent into tokens, runs transformer blocks with
adaptive layer-norm conditioning on (time, class), and reads out a
velocity field of the same shape. Hidden states after any block can be
tapped for the alignment head. Modulation layers and the output head are
zero-initialized, so a freshly built model predicts exactly zero
velocity.

All weights are initialized from named Philox streams keyed by parameter
name, so construction is reproducible across platforms and independent
of module instantiation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import NumericError
from .rng import stream


@dataclass(frozen=True)
class BackboneConfig:
    latent: tuple[int, int, int] = (4, 8, 8)
    patch: int = 2
    depth: int = 6
    width: int = 256
    heads: int = 4
    classes: int = 8
    label_dropout: float = 0.1  # applied by the trainer, not by forward()
    seed: int = 0

    def __post_init__(self):
        c, h, w = self.latent
        if c < 1 or h < 1 or w < 1:
            raise ValueError(f"invalid latent shape {self.latent}")
        if h % self.patch or w % self.patch:
            raise ValueError(f"latent {h}x{w} not divisible by patch {self.patch}")
        if self.width % self.heads:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.width % 4:
            raise ValueError("width must be divisible by 4 (2-d sin/cos positions)")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if not 0.0 <= self.label_dropout < 1.0:
            raise ValueError("label_dropout must be in [0, 1)")

    @property
    def grid(self) -> tuple[int, int]:
        return self.latent[1] // self.patch, self.latent[2] // self.patch

    @property
    def tokens(self) -> int:
        gh, gw = self.grid
        return gh * gw

    @property
    def null_class(self) -> int:
        return self.classes


def patchify(x: torch.Tensor, patch: int) -> torch.Tensor:
    """[B,C,H,W] -> [B,T,C*p*p] token features, (C, ph, pw) order per token."""
    b, c, h, w = x.shape
    gh, gw = h // patch, w // patch
    x = x.reshape(b, c, gh, patch, gw, patch)
    x = x.permute(0, 2, 4, 1, 3, 5)  # b, gh, gw, c, ph, pw
    return x.reshape(b, gh * gw, c * patch * patch)


def unpatchify(tokens: torch.Tensor, latent: tuple[int, int, int], patch: int) -> torch.Tensor:
    """Inverse of patchify: [B,T,C*p*p] -> [B,C,H,W]."""
    c, h, w = latent
    b = tokens.shape[0]
    gh, gw = h // patch, w // patch
    x = tokens.reshape(b, gh, gw, c, patch, patch)
    x = x.permute(0, 3, 1, 4, 2, 5)
    return x.reshape(b, c, h, w)


def time_embedding(t: torch.Tensor, dim: int, scale: float = 1000.0) -> torch.Tensor:
    """Sinusoidal features of t in [0,1]; t is multiplied by `scale` so the
    frequency ladder resolves small time differences."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype) / half
    )
    args = t[:, None] * scale * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _pos_embed_1d(dim: int, positions: np.ndarray) -> np.ndarray:
    omega = np.arange(dim // 2, dtype=np.float64)
    omega = 1.0 / 10000.0 ** (omega / (dim // 2))
    out = np.outer(positions, omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def pos_embed_2d(dim: int, gh: int, gw: int) -> np.ndarray:
    """Fixed 2-d sin/cos token positions, [gh*gw, dim]."""
    ys, xs = np.meshgrid(np.arange(gh, dtype=np.float64), np.arange(gw, dtype=np.float64), indexing="ij")
    emb_h = _pos_embed_1d(dim // 2, ys.reshape(-1))
    emb_w = _pos_embed_1d(dim // 2, xs.reshape(-1))
    return np.concatenate([emb_h, emb_w], axis=1).astype(np.float32)


class Block(nn.Module):
    """Transformer block with zero-initialized adaptive-norm modulation."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)
        self.norm2 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.fc1 = nn.Linear(width, 4 * width)
        self.fc2 = nn.Linear(4 * width, width)
        self.modulation = nn.Linear(width, 6 * width)

    def _attention(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        hd = d // self.heads
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = (q @ k.transpose(-2, -1)) * hd**-0.5
        att = att.softmax(dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, d)
        return self.proj(out)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        mods = self.modulation(F.silu(c))[:, None, :].chunk(6, dim=-1)
        shift1, scale1, gate1, shift2, scale2, gate2 = mods
        x = x + gate1 * self._attention(self.norm1(x) * (1 + scale1) + shift1)
        x = x + gate2 * (self.fc2(F.gelu(self.fc1(self.norm2(x) * (1 + scale2) + shift2))))
        return x


class FinalLayer(nn.Module):
    def __init__(self, width: int, out_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.modulation = nn.Linear(width, 2 * width)
        self.linear = nn.Linear(width, out_dim)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift, scale = self.modulation(F.silu(c))[:, None, :].chunk(2, dim=-1)
        return self.linear(self.norm(x) * (1 + scale) + shift)


@dataclass
class BackboneOutput:
    velocity: torch.Tensor
    hidden: Mapping[int, torch.Tensor]


class Backbone(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        c, _, _ = cfg.latent
        self.patch_embed = nn.Conv2d(c, cfg.width, kernel_size=cfg.patch, stride=cfg.patch)
        self.time_fc1 = nn.Linear(cfg.width, cfg.width)
        self.time_fc2 = nn.Linear(cfg.width, cfg.width)
        # one extra row for the null (unconditional) class
        self.class_embed = nn.Embedding(cfg.classes + 1, cfg.width)
        self.blocks = nn.ModuleList(Block(cfg.width, cfg.heads) for _ in range(cfg.depth))
        self.final = FinalLayer(cfg.width, cfg.patch * cfg.patch * c)
        gh, gw = cfg.grid
        self.register_buffer("pos", torch.from_numpy(pos_embed_2d(cfg.width, gh, gw)))

    def _condition(self, t: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        emb = time_embedding(t, self.cfg.width)
        emb = self.time_fc2(F.silu(self.time_fc1(emb)))
        return emb + self.class_embed(labels)

    def forward(
        self,
        y: torch.Tensor,
        t,
        labels=None,
        taps: Iterable[int] = (),
    ) -> BackboneOutput:
        """Predict the velocity at (y, t); optionally tap hidden states.

        y: [B,C,H,W]; t: scalar or length-B; labels: None (unconditional),
        an int, or a length-B tensor with values in [0, classes] where
        `classes` is the null token; taps: block indices (1-based) whose
        post-residual hidden states to return.
        """
        cfg = self.cfg
        if tuple(y.shape[1:]) != cfg.latent:
            raise ValueError(f"expected latent {cfg.latent}, got {tuple(y.shape[1:])}")
        taps = sorted(set(int(k) for k in taps))
        if taps and (taps[0] < 1 or taps[-1] > cfg.depth):
            raise ValueError(f"tap depths {taps} outside [1, {cfg.depth}]")
        b = y.shape[0]
        t = torch.as_tensor(t, dtype=y.dtype).reshape(-1)
        if t.numel() == 1:
            t = t.expand(b)
        if bool((t < 0).any()) or bool((t > 1).any()):
            raise ValueError("t must lie in [0, 1]")
        if labels is None:
            labels = torch.full((b,), cfg.null_class, dtype=torch.long)
        else:
            labels = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
            if labels.numel() == 1:
                labels = labels.expand(b)
            if bool((labels < 0).any()) or bool((labels > cfg.null_class).any()):
                raise ValueError(f"labels must lie in [0, {cfg.null_class}]")

        x = self.patch_embed(y).flatten(2).transpose(1, 2) + self.pos.to(y.dtype)
        c = self._condition(t, labels)
        hidden: dict[int, torch.Tensor] = {}
        for i, block in enumerate(self.blocks, start=1):
            x = block(x, c)
            if i in taps:
                hidden[i] = x
        tokens = self.final(x, c)
        velocity = unpatchify(tokens, cfg.latent, cfg.patch)
        if not bool(torch.isfinite(velocity).all()):
            raise NumericError("backbone produced non-finite velocity")
        return BackboneOutput(velocity=velocity, hidden=hidden)


def _xavier_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def _init_tensor(name: str, shape: tuple[int, ...], seed: int) -> np.ndarray:
    """Initial value for one named parameter, drawn from its own stream."""
    gen = stream(seed, "init", name)
    if name.endswith("bias"):
        return np.zeros(shape, dtype=np.float32)
    if "modulation" in name or "final.linear" in name:
        return np.zeros(shape, dtype=np.float32)
    if "class_embed" in name:
        return (gen.standard_normal(shape, dtype=np.float32) * 0.02).astype(np.float32)
    if len(shape) == 4:  # conv: torch fan convention includes the receptive field
        receptive = shape[2] * shape[3]
        limit = _xavier_limit(shape[1] * receptive, shape[0] * receptive)
    else:
        limit = _xavier_limit(shape[1], shape[0])
    vals = gen.random(shape, dtype=np.float32)
    return (vals * (2.0 * limit) - limit).astype(np.float32)


def init_module(module: nn.Module, seed: int, prefix: str = "") -> None:
    """Overwrite all parameters of `module` with stream-derived values."""
    with torch.no_grad():
        for name, param in sorted(module.named_parameters()):
            param.copy_(torch.from_numpy(_init_tensor(prefix + name, tuple(param.shape), seed)))


def build_backbone(cfg: BackboneConfig) -> Backbone:
    model = Backbone(cfg)
    init_module(model, cfg.seed, prefix="backbone.")
    return model


def count_params(cfg: BackboneConfig) -> int:
    """Closed-form parameter count of the constructed model."""
    c, _, _ = cfg.latent
    d = cfg.width
    head_dim = cfg.patch * cfg.patch * c
    patch_embed = c * cfg.patch * cfg.patch * d + d
    time_embed = 2 * (d * d + d)
    class_embed = (cfg.classes + 1) * d
    block = (d * 6 * d + 6 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (d * 4 * d + 4 * d) + (4 * d * d + d)
    final = (d * 2 * d + 2 * d) + (d * head_dim + head_dim)
    return patch_embed + time_embed + class_embed + cfg.depth * block + final
