"""Building labeled datasets from the phantom world."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..manifest import DatasetManifest, ManifestRow, save_image_png
from .render import render_styled
from .sampling import sample_spec, sample_tail_spec
from .types import PhantomSpec, WorldConfig, derive_seed


def _row_from_spec(spec: PhantomSpec, row_id: str, path: str, label_standard: str,
                   split: str, pathology: str | None = None) -> ManifestRow:
    return ManifestRow(
        id=row_id, path=path, pathology=pathology or spec.pathology, subtype=spec.subtype,
        ncm=spec.ncm, cal=spec.cal, dcis=spec.is_dcis, device=spec.device,
        bbox=spec.bbox, label_standard=label_standard, split=split,
    )


def _assign_splits(n: int, train_fraction: float, policy: str, labels: list[int],
                   rng: np.random.Generator) -> list[str]:
    if not 0 <= train_fraction <= 1:
        raise ValueError(f"train_fraction {train_fraction} outside [0, 1]")
    idx = np.arange(n)
    splits = np.array(["train"] * n, dtype=object)
    if policy == "random":
        perm = rng.permutation(idx)
        n_train = int(round(n * train_fraction))
        splits[perm[n_train:]] = "test"
    elif policy == "stratified":
        labels_arr = np.asarray(labels)
        for cls in np.unique(labels_arr):
            members = idx[labels_arr == cls]
            perm = rng.permutation(members)
            n_train = int(round(len(members) * train_fraction))
            splits[perm[n_train:]] = "test"
    else:
        raise ValueError(f"unknown split policy {policy!r}")
    return list(splits)


def build_dataset(config: WorldConfig, n: int, out_dir: Path | str,
                  rng: np.random.Generator | int, split_policy: str = "random",
                  train_fraction: float = 0.8, silver_fraction: float = 0.0,
                  silver_flip_rate: float = 0.02, name: str = "manifest",
                  image_subdir: str = "images") -> DatasetManifest:
    """Sample n lesions, render PNGs, and write a manifest CSV.

    silver_fraction of rows get BI-RADS-style "silver" labels; of those a
    small fraction carry a flipped pathology label to model rating error.
    The remaining rows keep biopsy-grade "gold" labels.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out_dir = Path(out_dir)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    specs = [sample_spec(config, rng) for _ in range(n)]
    labels = [1 if s.pathology == "malignant" else 0 for s in specs]
    splits = _assign_splits(n, train_fraction, split_policy, labels, rng)

    silver = rng.random(n) < silver_fraction
    flips = rng.random(n) < silver_flip_rate

    rows = []
    for i, spec in enumerate(specs):
        row_id = f"L{i:06d}"
        rel = f"{image_subdir}/{row_id}.png"
        img = render_styled(spec, size=config.image_size, config=config)
        save_image_png(img.pixels, out_dir / rel)
        pathology = spec.pathology
        standard = "gold"
        if silver[i]:
            standard = "silver"
            if flips[i]:
                pathology = "benign" if pathology == "malignant" else "malignant"
        rows.append(_row_from_spec(spec, row_id, rel, standard, splits[i], pathology))
    manifest = DatasetManifest(rows, root=out_dir)
    manifest.save(out_dir / f"{name}.csv")
    return manifest


def build_tail_testset(config: WorldConfig, kind: str, n_per_class: int,
                       out_dir: Path | str, rng: np.random.Generator | int,
                       name: str | None = None) -> DatasetManifest:
    """Purposively collected evaluation set for one tail task.

    kind "dcis": benign vs DCIS; "ncm"/"cal": benign vs malignant among
    feature-positive lesions.
    """
    out_dir = Path(out_dir)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    name = name or f"test_{kind}"
    rows = []
    i = 0
    for pathology in ("benign", "malignant"):
        for _ in range(n_per_class):
            spec = sample_tail_spec(config, rng, kind, pathology)
            row_id = f"T{kind[:1].upper()}{i:05d}"
            rel = f"{name}_images/{row_id}.png"
            img = render_styled(spec, size=config.image_size, config=config)
            save_image_png(img.pixels, out_dir / rel)
            rows.append(_row_from_spec(spec, row_id, rel, "gold", "test"))
            i += 1
    manifest = DatasetManifest(rows, root=out_dir)
    manifest.save(out_dir / f"{name}.csv")
    return manifest


def shard_seed(base_seed: int, shard: int) -> int:
    return derive_seed(base_seed, shard)
