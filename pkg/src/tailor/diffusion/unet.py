"""Noise-prediction U-Net: three resolution levels, additive skip paths,
sinusoidal time embedding summed with learned condition embeddings."""

from __future__ import annotations

import numpy as np

import tailor.nn as nn
from tailor.nn import Tensor

from .conditioning import CondBatch, ConditionVector, encode_conditions


def _masked_embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    """Lookup with -1 rows contributing exactly zero."""
    safe = np.maximum(idx, 0)
    emb = nn.embedding(table, safe)
    mask = (idx >= 0).astype(np.float32)[:, None]
    return nn.mul(emb, Tensor(mask))


def _slice_axis1(t: Tensor, i: int) -> Tensor:
    """Differentiable t[:, i] along a length-2 axis."""
    from tailor.nn.tensor import _make

    def rule(g):
        full = np.zeros_like(t.data)
        full[:, i] = g
        t._accumulate(full)

    return _make(np.ascontiguousarray(t.data[:, i]), "slice1", (t,), rule)


#: input-plane layout: pathology(+-1), tail one-hot x3, device one-hot x3, box mask
N_COND_CHANNELS = 8


def condition_channels(cond: CondBatch, size: int) -> np.ndarray:
    """Spatial condition planes concatenated to the noisy image.

    Empty slots contribute all-zero planes, so the fully-empty vector is
    the unconditional input here as well. The lesion box enters as an
    elliptical mask; pathology and tail planes are localized to that mask
    when it is present (they describe lesion, not background, properties),
    while the device plane stays global.
    """
    b = len(cond)
    planes = np.zeros((b, N_COND_CHANNELS, size, size), dtype=np.float32)
    path = cond.pathology
    planes[:, 0] = np.where(path == 1, 1.0, np.where(path == 0, -1.0, 0.0)
                            )[:, None, None]
    for k in range(3):
        planes[:, 1 + k] = (cond.tail == k).astype(np.float32)[:, None, None]
        planes[:, 4 + k] = (cond.device == k).astype(np.float32)[:, None, None]
    if cond.bbox_mask.any():
        ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
        xs = (xs + 0.5) / size
        ys = (ys + 0.5) / size
        for i in np.flatnonzero(cond.bbox_mask):
            cx, cy, hw, hh = cond.bbox[i]
            d = ((xs - cx) / max(hw, 1e-6)) ** 2 + ((ys - cy) / max(hh, 1e-6)) ** 2
            mask = (d < 1.0).astype(np.float32)
            planes[i, 7] = mask
            planes[i, 0] *= mask
            planes[i, 1:4] *= mask[None]
    return planes


class ResBlock(nn.Module):
    """Two 3x3 convs with a residual path; the embedding modulates the
    normalized activations multiplicatively and additively (scale+shift),
    which survives later normalization far better than a bare shift."""

    def __init__(self, channels: int, emb_dim: int, rng: np.random.Generator):
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, 3, rng)
        self.norm1 = nn.GroupNorm(channels)
        self.emb_proj = nn.Dense(emb_dim, 2 * channels, rng)
        self.emb_proj.w.data[:] = 0.0  # start as identity modulation
        self.conv2 = nn.Conv2d(channels, channels, 3, rng)
        self.norm2 = nn.GroupNorm(channels)

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.norm1(self.conv1(x))
        b = len(emb.data)
        mod = nn.reshape(self.emb_proj(emb), (b, 2, self.channels, 1, 1))
        gamma = _slice_axis1(mod, 0)
        beta = _slice_axis1(mod, 1)
        one = Tensor(np.ones((1, 1, 1, 1), dtype=np.float32))
        h = nn.mul(h, nn.add(one, gamma))
        h = nn.silu(nn.add(h, beta))
        h = nn.silu(self.norm2(self.conv2(h)))
        return nn.add(x, h)


class DenoiserModel(nn.Module):
    """eps(x_t, t, c) over (B, 1, H, W) images in model space [-1, 1].

    A strided stem moves straight to half resolution; the three ResBlock
    levels then run at 1/2, 1/4 and 1/8 scale, with a light transposed-conv
    head decoding back to full resolution.
    """

    def __init__(self, image_size: int = 32, base_channels: int = 16, emb_dim: int = 64,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        c1, c2, c3 = base_channels, base_channels * 2, base_channels * 4
        head = max(8, base_channels // 2)
        self.image_size = image_size
        self.emb_dim = emb_dim
        self.base_channels = base_channels

        self.time_proj1 = nn.Dense(emb_dim, emb_dim, rng)
        self.time_proj2 = nn.Dense(emb_dim, emb_dim, rng)
        self.pathology_emb = nn.Embedding(2, emb_dim, rng, std=0.1)
        self.tail_emb = nn.Embedding(3, emb_dim, rng, std=0.1)
        self.device_emb = nn.Embedding(3, emb_dim, rng, std=0.1)
        self.bbox_proj = nn.Dense(4, emb_dim, rng, bias=False)

        self.stem = nn.Conv2d(1 + N_COND_CHANNELS, c1, 3, rng, stride=2)
        self.block1 = ResBlock(c1, emb_dim, rng)
        self.down1 = nn.Conv2d(c1, c2, 3, rng, stride=2)
        self.block2 = ResBlock(c2, emb_dim, rng)
        self.down2 = nn.Conv2d(c2, c3, 3, rng, stride=2)
        self.mid = ResBlock(c3, emb_dim, rng)
        self.up2 = nn.ConvTranspose2d(c3, c2, 4, rng, stride=2, padding=1)
        self.dec2 = ResBlock(c2, emb_dim, rng)
        self.up1 = nn.ConvTranspose2d(c2, c1, 4, rng, stride=2, padding=1)
        self.dec1 = ResBlock(c1, emb_dim, rng)
        self.up0 = nn.ConvTranspose2d(c1, head, 4, rng, stride=2, padding=1)
        self.out_norm = nn.GroupNorm(head)
        self.out_conv = nn.Conv2d(head, 1, 3, rng)
        # zero-init the output projection: the fresh model predicts eps=0
        self.out_conv.w.data[:] = 0.0

    def config(self) -> dict:
        return {"image_size": self.image_size, "base_channels": self.base_channels,
                "emb_dim": self.emb_dim, "arch": "unet3"}

    @classmethod
    def from_config(cls, cfg: dict) -> "DenoiserModel":
        return cls(image_size=cfg["image_size"], base_channels=cfg["base_channels"],
                   emb_dim=cfg["emb_dim"])

    def embed(self, t, cond: CondBatch) -> Tensor:
        te = Tensor(nn.sinusoidal_embedding(t, self.emb_dim))
        emb = self.time_proj2(nn.silu(self.time_proj1(te)))
        emb = nn.add(emb, _masked_embedding(self.pathology_emb.table, cond.pathology))
        emb = nn.add(emb, _masked_embedding(self.tail_emb.table, cond.tail))
        emb = nn.add(emb, _masked_embedding(self.device_emb.table, cond.device))
        bbox_emb = nn.mul(self.bbox_proj(Tensor(cond.bbox)),
                          Tensor(cond.bbox_mask[:, None]))
        return nn.add(emb, bbox_emb)

    def __call__(self, x, t, cond) -> Tensor:
        """x: (B,1,H,W) array or Tensor; t: scalar or (B,) steps; cond:
        CondBatch or list[ConditionVector]."""
        if isinstance(cond, list):
            cond = encode_conditions(cond)
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))
        t = np.broadcast_to(np.asarray(t, dtype=np.float32), (x.shape[0],))
        emb = self.embed(t, cond)
        planes = Tensor(condition_channels(cond, x.shape[-1]))
        x = nn.concat([x, planes], axis=1)

        h1 = self.block1(self.stem(x), emb)
        h2 = self.block2(self.down1(h1), emb)
        h3 = self.mid(self.down2(h2), emb)
        u2 = self.dec2(nn.add(self.up2(h3), h2), emb)
        u1 = self.dec1(nn.add(self.up1(u2), h1), emb)
        return self.out_conv(nn.silu(self.out_norm(self.up0(u1))))

    def predict(self, x: np.ndarray, t, cond) -> np.ndarray:
        with nn.no_grad():
            return self(x, t, cond).data


def condition_parameters(model: DenoiserModel) -> list[Tensor]:
    """The tail-slot parameters left untouched by basic-knowledge training;
    they train alongside the adapters during tail fine-tuning."""
    return [model.tail_emb.table]
