"""Denoiser training: noise-prediction loss with condition dropout,
the pre-training loop, and tail fine-tuning with strong augmentations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import tailor.nn as nn
from tailor.nn import Tensor

from ..manifest import DatasetManifest, ManifestRow
from ..world.render import apply_device_style
from ..world.types import PhantomImage
from .conditioning import ConditionVector, encode_conditions
from .lora import lora_parameters
from .schedule import NoiseSchedule, q_sample
from .unet import DenoiserModel, condition_parameters


def training_loss(model, x0_images: np.ndarray, conds: list[ConditionVector],
                  schedule: NoiseSchedule, cond_dropout_p: float,
                  rng: np.random.Generator) -> Tensor:
    """E ||eps - eps_hat(x_t, t, c)||^2 with t ~ U{1..T} per example.

    With probability cond_dropout_p a condition is replaced by the empty
    vector, which trains the unconditional branch used by guidance.
    """
    if len(x0_images) == 0:
        raise ValueError("empty batch")
    if not 0 <= cond_dropout_p < 1:
        raise ValueError(f"cond_dropout_p {cond_dropout_p} outside [0, 1)")
    x0 = 2.0 * np.asarray(x0_images, dtype=np.float32) - 1.0
    b = len(x0)
    t = rng.integers(1, schedule.T + 1, size=b)
    eps = rng.standard_normal(x0.shape).astype(np.float32)
    x_t = q_sample(x0, t, eps, schedule).astype(np.float32)
    dropped = [ConditionVector.unconditional() if rng.random() < cond_dropout_p else c
               for c in conds]
    eps_hat = model(x_t, t.astype(np.float32), encode_conditions(dropped))
    return nn.mse(eps_hat, eps)


def row_condition(row: ManifestRow, kind: str | None = None,
                  mode: str = "full") -> ConditionVector:
    """Build the training condition for a manifest row.

    mode "pathology": label slot only. mode "basic": pathology plus the
    basic-knowledge slots (device, lesion box). mode "full" adds the tail
    category; kind pins it, otherwise it derives from the row's flags
    (dcis > ncm > cal).
    """
    if mode == "pathology":
        return ConditionVector(pathology=row.pathology)
    if mode == "basic":
        return ConditionVector(pathology=row.pathology, device=row.device, bbox=row.bbox)
    if mode != "full":
        raise ValueError(f"unknown condition mode {mode!r}")
    tail = kind
    if tail is None:
        tail = "dcis" if row.dcis else "ncm" if row.ncm else "cal" if row.cal else None
    return ConditionVector(pathology=row.pathology, tail_category=tail,
                           device=row.device, bbox=row.bbox)


@dataclass
class TrainReport:
    losses: list[float]

    def median_first_last(self, fraction: float = 0.1) -> tuple[float, float]:
        k = max(1, int(len(self.losses) * fraction))
        return float(np.median(self.losses[:k])), float(np.median(self.losses[-k:]))


def train_denoiser(model: DenoiserModel, images: np.ndarray,
                   conds: list[ConditionVector], schedule: NoiseSchedule,
                   steps: int, batch_size: int, lr: float,
                   rng: np.random.Generator, cond_dropout_p: float = 0.1,
                   weight_decay: float = 1e-4, grad_clip: float = 1.0,
                   params: list[Tensor] | None = None,
                   lr_kind: str = "cosine") -> TrainReport:
    """Generic noise-prediction training loop (cosine LR, clipped AdamW)."""
    if len(images) != len(conds):
        raise ValueError("images and conditions disagree in length")
    params = params if params is not None else model.trainable_parameters()
    opt = nn.AdamW(params, lr=lr, weight_decay=weight_decay)
    losses = []
    n = len(images)
    for step in range(steps):
        idx = rng.integers(0, n, size=min(batch_size, n))
        batch_conds = [conds[i] for i in idx]
        loss = training_loss(model, images[idx], batch_conds, schedule,
                             cond_dropout_p, rng)
        opt.zero_grad()
        nn.backprop(loss)
        nn.clip_gradients(params, grad_clip)
        step_lr = nn.lr_schedule(step, steps, lr, kind=lr_kind)
        opt.step(lr=max(step_lr, 1e-8))
        losses.append(float(loss.data))
    return TrainReport(losses)


# ---------------------------------------------------------------------------
# augmentations
# ---------------------------------------------------------------------------

def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0, 1)[:, None]
    wx = np.clip(xs - x0, 0, 1)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def augment_example(img: np.ndarray, bbox, device: str, rng: np.random.Generator,
                    jitter: tuple[float, float] = (0.7, 1.3)) -> tuple[np.ndarray, tuple, str]:
    """Random crop keeping the lesion, horizontal flip, brightness/contrast
    jitter (default [0.7, 1.3]), and re-styling to a random device type."""
    h, w = img.shape
    cx, cy, hw, hh = bbox

    # crop window containing the whole lesion
    frac = float(rng.uniform(0.8, 1.0))
    cw = int(round(w * frac))
    ch = int(round(h * frac))
    x_lo_max = min(int(np.floor((cx - hw) * w)), w - cw)
    x_lo_min = max(0, int(np.ceil((cx + hw) * w)) - cw)
    y_lo_max = min(int(np.floor((cy - hh) * h)), h - ch)
    y_lo_min = max(0, int(np.ceil((cy + hh) * h)) - ch)
    if x_lo_min <= x_lo_max and y_lo_min <= y_lo_max:
        x_lo = int(rng.integers(x_lo_min, x_lo_max + 1))
        y_lo = int(rng.integers(y_lo_min, y_lo_max + 1))
        img = bilinear_resize(img[y_lo:y_lo + ch, x_lo:x_lo + cw], h, w)
        cx = (cx * w - x_lo) / cw
        cy = (cy * h - y_lo) / ch
        hw = hw * w / cw
        hh = hh * h / ch

    if rng.random() < 0.5:
        img = img[:, ::-1].copy()
        cx = 1.0 - cx

    brightness = float(rng.uniform(*jitter))
    contrast = float(rng.uniform(*jitter))
    mean = img.mean()
    img = np.clip((img - mean) * contrast + mean * brightness, 0.0, 1.0)

    new_device = "ABC"[int(rng.integers(0, 3))]
    if new_device != device:
        img = apply_device_style(PhantomImage(img.astype(np.float32)), new_device).pixels

    bbox = (float(np.clip(cx, hw, 1 - hw)), float(np.clip(cy, hh, 1 - hh)),
            float(hw), float(hh))
    return img.astype(np.float32), bbox, new_device


def fine_tune_tail(model: DenoiserModel, manifest: DatasetManifest,
                   schedule: NoiseSchedule, epochs: float, rng: np.random.Generator,
                   kind: str | None = None, batch_size: int = 16, lr: float = 1e-3,
                   cond_dropout_p: float = 0.1, grad_clip: float = 1.0,
                   augment: bool = True,
                   jitter: tuple[float, float] = (0.7, 1.3)) -> TrainReport:
    """Train adapters (plus the fresh knowledge-slot embeddings) on
    tail-conditioned batches; the pre-trained trunk stays frozen."""
    if len(manifest) == 0:
        raise ValueError("tail manifest is empty")
    adapters = lora_parameters(model)
    if not adapters:
        raise ValueError("attach adapters before fine-tuning")
    extra = condition_parameters(model)
    for p in extra:
        p.requires_grad = True
    params = adapters + extra
    if epochs <= 0:
        return TrainReport([])

    images = manifest.load_images()
    rows = manifest.rows
    steps = max(1, int(round(epochs * len(rows) / batch_size)))
    opt = nn.AdamW(params, lr=lr, weight_decay=1e-4)
    losses = []
    for step in range(steps):
        idx = rng.integers(0, len(rows), size=min(batch_size, len(rows)))
        batch_imgs = []
        batch_conds = []
        for i in idx:
            row = rows[i]
            img = images[i, 0]
            bbox, device = row.bbox, row.device
            if augment:
                img, bbox, device = augment_example(img, bbox, device, rng, jitter=jitter)
            cond = row_condition(row, kind=kind)
            cond = ConditionVector(pathology=cond.pathology,
                                   tail_category=cond.tail_category,
                                   device=device, bbox=bbox)
            batch_imgs.append(img[None])
            batch_conds.append(cond)
        loss = training_loss(model, np.stack(batch_imgs), batch_conds, schedule,
                             cond_dropout_p, rng)
        opt.zero_grad()
        nn.backprop(loss)
        nn.clip_gradients(params, grad_clip)
        opt.step(lr=max(nn.cosine_lr(step, steps, lr), 1e-8))
        losses.append(float(loss.data))
    return TrainReport(losses)
