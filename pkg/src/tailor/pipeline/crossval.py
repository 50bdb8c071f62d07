"""Cross-validated selection of ensemble gating parameters.

Model outputs are precomputed once per image; the grid search then costs
only arithmetic. Ties break toward smaller weights, then lower thresholds.
"""

from __future__ import annotations

import numpy as np

from ..diagnosis import EnsembleModel
from ..manifest import DatasetManifest
from ..stats import auc_from_arrays


def _fold_assignment(manifest: DatasetManifest, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    folds = np.zeros(len(manifest), dtype=int)
    labels = manifest.labels()
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for i, j in enumerate(idx):
            folds[j] = i % k
    return folds


def _combined_scores(base_logits, expert_reads, thresholds, weights) -> np.ndarray:
    y = base_logits.copy()
    for kind, (logits, members) in expert_reads.items():
        selected = members > thresholds[kind]
        y = y + np.where(selected, weights[kind] * logits, 0.0)
    return 1.0 / (1.0 + np.exp(-np.clip(y, -40, 40)))


def crossval_select(ensemble: EnsembleModel, manifest: DatasetManifest,
                    grid: list[dict], k: int = 5, seed: int = 0) -> tuple[dict, list]:
    """Pick the grid point maximizing mean held-out AUC across k folds."""
    if not grid:
        raise ValueError("empty parameter grid")
    if len(grid) == 1:
        return grid[0], [{"params": grid[0], "mean_auc": None, "note": "single point"}]
    folds = _fold_assignment(manifest, k, seed)
    for fold in range(k):
        if (folds == fold).sum() == 0:
            raise ValueError(f"fold {fold} is empty")
    images = manifest.load_images()
    labels = manifest.labels()
    base_logits, _ = ensemble.base.predict(images)
    expert_reads = {kind: expert.predict(images)
                    for kind, expert in ensemble.experts.items()}

    table = []
    for params in grid:
        scores = _combined_scores(base_logits, expert_reads,
                                  params["thresholds"], params["weights"])
        fold_aucs = []
        for fold in range(k):
            held = folds == fold
            if len(np.unique(labels[held])) < 2:
                continue
            fold_aucs.append(auc_from_arrays(scores[held], labels[held]))
        table.append({"params": params, "mean_auc": float(np.mean(fold_aucs)),
                      "fold_aucs": [float(a) for a in fold_aucs]})

    def sort_key(row):
        p = row["params"]
        return (-row["mean_auc"],
                sum(p["weights"].values()),
                sum(p["thresholds"].values()))

    best = min(table, key=sort_key)
    return best["params"], table
