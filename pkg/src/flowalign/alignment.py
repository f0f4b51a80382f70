"""Feature-alignment head: projector MLP and alignment objectives.

The projector maps tapped transformer token features to per-token latent
patches, which unpatchify to the clean-latent shape [C,H,W]. The
objectives score the difference between that projection and the clean
VAE latent of the same sample. The projector is a training-only device;
samplers never read its weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import init_module, patchify, unpatchify
from .errors import NumericError


class Objective(Enum):
    SMOOTH_L1 = "smooth_l1"
    L1 = "l1"
    L2 = "l2"
    COSINE = "cosine"


@dataclass(frozen=True)
class AlignmentConfig:
    objective: Objective = Objective.SMOOTH_L1
    beta: float = 0.05
    lam: float = 1.0
    tap_depth: int = 2
    t_lo: float = 0.0
    t_hi: float = 1.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.t_lo < self.t_hi <= 1.0:
            raise ValueError(f"need 0 <= t_lo < t_hi <= 1, got [{self.t_lo}, {self.t_hi}]")
        if self.tap_depth < 1:
            raise ValueError("tap_depth must be >= 1")


@dataclass(frozen=True)
class ProjectorConfig:
    width: int          # token feature width of the backbone
    out_dim: int        # values per token = C * patch**2
    hidden: int = 0     # 0 means 4 * width
    layers: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError("projector needs at least 2 linear layers")
        if self.width < 1 or self.out_dim < 1:
            raise ValueError("width and out_dim must be positive")

    @property
    def hidden_width(self) -> int:
        return self.hidden if self.hidden > 0 else 4 * self.width


class Projector(nn.Module):
    """Per-token MLP: width -> hidden x (layers-1) -> out_dim, SiLU between
    layers, no activation after the last."""

    def __init__(self, cfg: ProjectorConfig):
        super().__init__()
        self.cfg = cfg
        dims = [cfg.width] + [cfg.hidden_width] * (cfg.layers - 1) + [cfg.out_dim]
        self.linears = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        x = tokens
        for i, lin in enumerate(self.linears):
            x = lin(x)
            if i + 1 < len(self.linears):
                x = F.silu(x)
        return x


def build_projector(cfg: ProjectorConfig) -> Projector:
    model = Projector(cfg)
    init_module(model, cfg.seed, prefix="projector.")
    return model


def count_projector_params(cfg: ProjectorConfig) -> int:
    h, d, out = cfg.hidden_width, cfg.width, cfg.out_dim
    return (d * h + h) + (cfg.layers - 2) * (h * h + h) + (h * out + out)


def project(
    proj: Projector,
    hidden: torch.Tensor,
    latent: tuple[int, int, int],
    patch: int,
) -> torch.Tensor:
    """Project tapped token features [B,T,D] (or [T,D]) to latents [B,C,H,W]
    (or [C,H,W])."""
    squeeze = hidden.dim() == 2
    if squeeze:
        hidden = hidden[None]
    c, h, w = latent
    tokens = (h // patch) * (w // patch)
    if hidden.shape[1] != tokens:
        raise ValueError(f"expected {tokens} tokens for latent {latent} / patch {patch}, got {hidden.shape[1]}")
    if proj.cfg.out_dim != c * patch * patch:
        raise ValueError(f"projector out_dim {proj.cfg.out_dim} != C*p*p = {c * patch * patch}")
    out = unpatchify(proj(hidden), latent, patch)
    return out[0] if squeeze else out


def smooth_l1(delta: torch.Tensor, beta: float) -> torch.Tensor:
    """Elementwise smooth-l1: quadratic d^2/(2 beta) inside |d| <= beta,
    linear |d| - beta/2 outside; continuous at the threshold."""
    ad = delta.abs()
    return torch.where(ad <= beta, delta * delta / (2.0 * beta), ad - beta / 2.0)


def align_loss_per_sample(
    cfg: AlignmentConfig,
    f_sit: torch.Tensor,
    f_vae: torch.Tensor,
    patch: int = 1,
) -> torch.Tensor:
    """Per-sample alignment loss over batched [B,C,H,W] features -> [B].

    Smooth-l1 / l1 / l2 average over all C*H*W elements. Cosine patchifies
    both maps with `patch` and averages (1 - cosine similarity) over token
    positions, matching how the projector emits per-token vectors.
    """
    if f_sit.shape != f_vae.shape:
        raise ValueError(f"feature shapes differ: {tuple(f_sit.shape)} vs {tuple(f_vae.shape)}")
    if not bool(torch.isfinite(f_sit).all()) or not bool(torch.isfinite(f_vae).all()):
        raise NumericError("align_loss requires finite inputs")
    if cfg.objective is Objective.COSINE:
        u = patchify(f_sit, patch)
        v = patchify(f_vae, patch)
        dot = (u * v).sum(-1)
        denom = (u.norm(dim=-1) * v.norm(dim=-1)).clamp_min(1e-8)
        return (1.0 - dot / denom).mean(dim=-1)
    delta = f_sit - f_vae
    if cfg.objective is Objective.SMOOTH_L1:
        per_elem = smooth_l1(delta, cfg.beta)
    elif cfg.objective is Objective.L1:
        per_elem = delta.abs()
    elif cfg.objective is Objective.L2:
        per_elem = delta * delta
    else:
        raise NotImplementedError(cfg.objective)
    return per_elem.reshape(per_elem.shape[0], -1).mean(dim=-1)


def align_loss(
    cfg: AlignmentConfig,
    f_sit: torch.Tensor,
    f_vae: torch.Tensor,
    patch: int = 1,
) -> torch.Tensor:
    """Scalar alignment loss for one [C,H,W] pair (or mean over a batch)."""
    if f_sit.dim() == 3:
        f_sit = f_sit[None]
        f_vae = f_vae[None]
    return align_loss_per_sample(cfg, f_sit, f_vae, patch).mean()
