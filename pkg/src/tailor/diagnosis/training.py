"""Training the diagnostic classifiers: synthetic-data base model, tail
experts with membership heads, and the real-data resampling baseline."""

from __future__ import annotations

import numpy as np

import tailor.nn as nn

from ..manifest import DatasetManifest
from .model import Classifier


class ClassBalanceError(ValueError):
    """Training set lacks a class (or tail membership negatives)."""


def _check_both_classes(labels: np.ndarray, what: str) -> None:
    if len(labels) == 0:
        raise ClassBalanceError(f"{what}: empty training set")
    if labels.min() == labels.max():
        raise ClassBalanceError(f"{what}: single-class training set "
                                f"(all {'malignant' if labels[0] else 'benign'})")


def train_classifier(model: Classifier, images: np.ndarray, labels: np.ndarray,
                     epochs: float, rng: np.random.Generator, batch_size: int = 32,
                     lr: float = 1e-3, weight_decay: float = 0.1,
                     membership_labels: np.ndarray | None = None,
                     membership_weight: float = 2.0,
                     sample_weights: np.ndarray | None = None,
                     pathology_mask: np.ndarray | None = None,
                     grad_clip: float = 1.0) -> list[float]:
    """Shared loop: BCE-with-logits on the pathology head; when membership
    labels are given, the membership head trains jointly. A pathology mask
    restricts the pathology loss to selected rows (tail-positive ones)."""
    n = len(images)
    steps = max(1, int(round(epochs * n / batch_size)))
    milestones = [int(steps * 0.6), int(steps * 0.85)]
    params = model.trainable_parameters()
    opt = nn.AdamW(params, lr=lr, weight_decay=weight_decay)
    labels = np.asarray(labels, dtype=np.float32)
    probs = None
    if sample_weights is not None:
        probs = sample_weights / sample_weights.sum()
    losses = []
    for step in range(steps):
        idx = rng.choice(n, size=min(batch_size, n), p=probs)
        logits, members = model(images[idx])
        if pathology_mask is not None:
            mask = pathology_mask[idx].astype(np.float32)
            if mask.sum() == 0:
                mask[0] = 1.0
            # masked mean: scale per-element bce by mask / mask.sum()
            loss_p = nn.tsum(nn.mul(_bce_elementwise(logits, labels[idx]),
                                    nn.Tensor(mask / mask.sum())))
        else:
            loss_p = nn.bce_with_logits(logits, labels[idx])
        loss = loss_p
        if membership_labels is not None:
            target = membership_labels[idx].astype(np.float32)
            member_loss = nn.tmean(_bce_probs(members, target))
            loss = nn.add(loss, nn.scale(member_loss, membership_weight))
        opt.zero_grad()
        nn.backprop(loss)
        nn.clip_gradients(params, grad_clip)
        opt.step(lr=nn.multistep_lr(step, lr, milestones))
        losses.append(float(loss.data))
    return losses


def _bce_elementwise(logits, targets):
    x = logits
    z = nn.Tensor(np.asarray(targets, dtype=np.float32))
    # max(x,0) - x*z + log(1+exp(-|x|)) elementwise via stable composition
    s = nn.sigmoid(x)
    return _bce_probs(s, targets)


def _bce_probs(probs, targets):
    eps = 1e-7
    p = nn.add(nn.scale(probs, 1 - 2 * eps), nn.Tensor(np.full(probs.shape, eps, np.float32)))
    z = np.asarray(targets, dtype=np.float32)
    log_p = _log(p)
    log_q = _log(nn.add(nn.scale(p, -1.0), nn.Tensor(np.ones(p.shape, np.float32))))
    term = nn.add(nn.mul(log_p, nn.Tensor(z)), nn.mul(log_q, nn.Tensor(1.0 - z)))
    return nn.scale(term, -1.0)


def _log(t):
    from tailor.nn.tensor import _make

    data = np.log(t.data)

    def rule(g):
        t._accumulate(g / t.data)

    return _make(data, "log", (t,), rule)


def train_base(manifest: DatasetManifest, epochs: float = 3.0, seed: int = 0,
               channels: tuple[int, ...] = (16, 32, 64, 128), batch_size: int = 32,
               lr: float = 1e-3, weight_decay: float = 0.1) -> tuple[Classifier, list[float]]:
    """General model trained on the cleaned, pathology-balanced synthetic set."""
    labels = manifest.labels()
    _check_both_classes(labels, "base training")
    images = manifest.load_images()
    model = Classifier(channels=channels, seed=seed, image_size=images.shape[-1])
    losses = train_classifier(model, images, labels, epochs,
                              np.random.default_rng(seed), batch_size=batch_size,
                              lr=lr, weight_decay=weight_decay)
    return model, losses


def fine_tune_expert(base: Classifier, manifest: DatasetManifest, kind: str,
                     epochs: float = 2.0, seed: int = 0, batch_size: int = 32,
                     lr: float = 3e-4, weight_decay: float = 0.2) -> tuple[Classifier, list[float]]:
    """Specialize a copy of the base model on one tail category.

    The manifest must mix tail-positive rows (both pathology classes for
    ncm/cal; benign-vs-dcis for dcis) with tail-negative rows that train
    the membership head's rejection side.
    """
    if kind not in ("ncm", "cal", "dcis"):
        raise ValueError(f"unknown expert kind {kind!r}")
    member = np.array([getattr(r, kind if kind != "dcis" else "dcis") for r in manifest.rows],
                      dtype=np.int64)
    expert = base.clone()
    if epochs <= 0:
        expert.membership_trained = False
        return expert, []
    if member.sum() == len(member):
        raise ClassBalanceError(f"{kind} expert: no membership negatives in the set")
    if member.sum() == 0:
        raise ClassBalanceError(f"{kind} expert: no tail-positive rows in the set")
    labels = manifest.labels()
    # ncm/cal discriminate within the tail; dcis discriminates vs benign
    mask = member == 1 if kind != "dcis" else (member == 1) | (labels == 0)
    _check_both_classes(labels[mask], f"{kind} expert pathology head")
    images = manifest.load_images()
    losses = train_classifier(expert, images, labels, epochs,
                              np.random.default_rng(seed), batch_size=batch_size,
                              lr=lr, weight_decay=weight_decay,
                              membership_labels=member, pathology_mask=mask)
    expert.membership_trained = True
    return expert, losses


def train_baseline_real(manifest: DatasetManifest, epochs: float = 3.0, seed: int = 0,
                        channels: tuple[int, ...] = (16, 32, 64, 128), batch_size: int = 32,
                        lr: float = 1e-3, weight_decay: float = 0.1) -> tuple[Classifier, list[float]]:
    """Conventional comparator: real long-tailed data with class-balanced
    oversampling (each batch draws both classes equally in expectation)."""
    labels = manifest.labels()
    _check_both_classes(labels, "baseline training")
    images = manifest.load_images()
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    weights = np.where(labels == 1, 0.5 / n_pos, 0.5 / n_neg)
    model = Classifier(channels=channels, seed=seed, image_size=images.shape[-1])
    losses = train_classifier(model, images, labels, epochs,
                              np.random.default_rng(seed), batch_size=batch_size,
                              lr=lr, weight_decay=weight_decay, sample_weights=weights)
    return model, losses


def oversampled_indices(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One epoch of class-balanced indices: minority upsampled to majority."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ClassBalanceError("oversampling needs both classes")
    target = max(len(pos), len(neg))
    take = lambda arr: arr if len(arr) == target else rng.choice(arr, size=target, replace=True)
    idx = np.concatenate([take(pos), take(neg)])
    rng.shuffle(idx)
    return idx
