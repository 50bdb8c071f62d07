"""Cleaning generated data: cross-validated pathology filters score each
synthetic image's disagreement with its conditioning label; the worst
rows (default: the top tenth) are removed before diagnostic training."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnosis.model import Classifier
from .diagnosis.training import ClassBalanceError, train_classifier
from .manifest import DatasetManifest


@dataclass
class FilterEnsemble:
    filters: list
    fold_of: dict[str, int]
    k: int


@dataclass
class CleanReport:
    total: int
    removed: int
    fraction: float
    mode: str
    per_condition: dict = field(default_factory=dict)
    score_histogram: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"total": self.total, "removed": self.removed, "fraction": self.fraction,
                "mode": self.mode, "per_condition": self.per_condition,
                "score_histogram": self.score_histogram}

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2))


def _stratified_folds(manifest: DatasetManifest, k: int,
                      rng: np.random.Generator) -> dict[str, int]:
    fold_of: dict[str, int] = {}
    for pathology in ("benign", "malignant"):
        ids = [r.id for r in manifest.rows if r.pathology == pathology]
        rng.shuffle(ids)
        for i, row_id in enumerate(ids):
            fold_of[row_id] = i % k
    return fold_of


def train_filters(manifest: DatasetManifest, k: int = 5, epochs: float = 4.0,
                  seed: int = 0, channels: tuple[int, ...] = (8, 16, 32, 64),
                  lr: float = 1e-3) -> FilterEnsemble:
    """k classifiers, each trained with one fold held out (mirrors the
    cross-validation split of the real training set)."""
    if k < 2:
        raise ValueError("need at least 2 filters")
    rng = np.random.default_rng(seed)
    fold_of = _stratified_folds(manifest, k, rng)
    labels = manifest.labels()
    images = manifest.load_images()
    folds = np.array([fold_of[r.id] for r in manifest.rows])
    filters = []
    for i in range(k):
        train_mask = folds != i
        fold_labels = labels[train_mask]
        if len(np.unique(fold_labels)) < 2:
            raise ClassBalanceError(f"fold {i}: training rows are single-class")
        model = Classifier(channels=channels, seed=seed + 100 + i,
                           image_size=images.shape[-1])
        train_classifier(model, images[train_mask], fold_labels, epochs,
                         np.random.default_rng(seed + 200 + i), lr=lr)
        filters.append(model)
    return FilterEnsemble(filters=filters, fold_of=fold_of, k=k)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -40, 40)))


def disagreement_scores(ensemble: FilterEnsemble, images: np.ndarray,
                        conditioned_labels: np.ndarray) -> np.ndarray:
    """Mean over filters of P(opposite pathology | image); 1 = certainly
    mislabeled, 0 = certainly consistent with the conditioning."""
    labels = np.asarray(conditioned_labels)
    probs = np.stack([_sigmoid(f.predict(images)[0]) for f in ensemble.filters])
    p_opposite = np.where(labels[None, :] == 1, 1.0 - probs, probs)
    return p_opposite.mean(axis=0)


def disagreement_score(ensemble: FilterEnsemble, image: np.ndarray,
                       conditioned_label: int) -> float:
    img = image if image.ndim == 4 else image[None, None]
    return float(disagreement_scores(ensemble, img, np.array([conditioned_label]))[0])


def clean(manifest: DatasetManifest, ensemble: FilterEnsemble,
          mode: str = "fraction", fraction: float = 0.10,
          threshold: float = 0.5) -> tuple[DatasetManifest, DatasetManifest, CleanReport]:
    """Partition a synthetic manifest into (kept, removed).

    fraction mode removes the top-fraction rows by disagreement score with
    deterministic id tie-breaking; threshold mode removes score > threshold.
    """
    if len(manifest) == 0:
        raise ValueError("empty synthetic manifest")
    if mode not in ("fraction", "threshold"):
        raise ValueError(f"unknown clean mode {mode!r}")
    if mode == "fraction" and not 0 <= fraction < 1:
        raise ValueError(f"fraction {fraction} outside [0, 1)")
    scores = disagreement_scores(ensemble, manifest.load_images(), manifest.labels())
    n = len(manifest)
    if mode == "fraction":
        n_remove = int(round(fraction * n))
        order = sorted(range(n), key=lambda i: (-scores[i], manifest.rows[i].id))
        removed_idx = set(order[:n_remove])
    else:
        removed_idx = {i for i in range(n) if scores[i] > threshold}
    kept_rows = [r for i, r in enumerate(manifest.rows) if i not in removed_idx]
    removed_rows = [r for i, r in enumerate(manifest.rows) if i in removed_idx]

    per_condition: dict[str, dict[str, int]] = {}
    for i, row in enumerate(manifest.rows):
        key = row.pathology if row.subtype == "generated" else f"{row.pathology}/{row.subtype}"
        cell = per_condition.setdefault(key, {"total": 0, "removed": 0})
        cell["total"] += 1
        cell["removed"] += int(i in removed_idx)
    hist, _ = np.histogram(scores, bins=10, range=(0.0, 1.0))
    report = CleanReport(total=n, removed=len(removed_rows),
                         fraction=len(removed_rows) / n, mode=mode,
                         per_condition=per_condition,
                         score_histogram=[int(c) for c in hist])
    return (DatasetManifest(kept_rows, root=manifest.root),
            DatasetManifest(removed_rows, root=manifest.root), report)
