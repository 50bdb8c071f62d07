"""Sampling lesion specifications from the configured long-tailed world."""

from __future__ import annotations

import numpy as np

from .types import DEVICES, PhantomSpec, WorldConfig


def _pick(table: dict, rng: np.random.Generator) -> str:
    names = sorted(table)
    probs = np.array([table[n] for n in names], dtype=np.float64)
    probs /= probs.sum()
    return names[int(rng.choice(len(names), p=probs))]


def _sample_bbox(config: WorldConfig, rng: np.random.Generator) -> tuple[float, float, float, float]:
    hw = float(rng.uniform(*config.bbox_hw_range))
    hh = float(rng.uniform(*config.bbox_hh_range))
    # gland band vertically; keep the whole ellipse inside the unit square
    cx = float(rng.uniform(hw + 0.02, 1.0 - hw - 0.02))
    lo = max(hh + 0.02, 0.30)
    hi = min(1.0 - hh - 0.02, 0.78)
    cy = float(rng.uniform(lo, hi)) if lo < hi else 0.5
    return (cx, cy, hw, hh)


def sample_spec(config: WorldConfig, rng: np.random.Generator,
                pathology: str | None = None, subtype: str | None = None,
                ncm: bool | None = None, cal: bool | None = None,
                device: str | None = None) -> PhantomSpec:
    """Draw one spec; keyword overrides support purposive (tail) collection."""
    if pathology is None:
        pathology = "malignant" if rng.random() < config.malignant_fraction else "benign"
    if subtype is None:
        subtype = _pick(config.subtype_table(pathology), rng)
    p_ncm, p_cal = config.feature_probs.get(subtype, (0.0, 0.0))
    is_dcis = subtype == "dcis"
    if ncm is None:
        ncm = bool(rng.random() < p_ncm)
    if cal is None:
        cal = bool(rng.random() < p_cal)
    if is_dcis:
        ncm = False  # in-situ lesions keep circumscribed margins
    if device is None:
        device = _pick(config.device_mix, rng)
    bbox = _sample_bbox(config, rng)
    seed = int(rng.integers(0, 2 ** 63 - 1))
    return PhantomSpec(pathology=pathology, subtype=subtype, ncm=bool(ncm), cal=bool(cal),
                       is_dcis=is_dcis, device=device, bbox=bbox, seed=seed)


def sample_tail_spec(config: WorldConfig, rng: np.random.Generator, kind: str,
                     pathology: str) -> PhantomSpec:
    """Purposively collected tail lesion: kind in {ncm, cal, dcis}."""
    if kind == "dcis":
        if pathology == "malignant":
            return sample_spec(config, rng, pathology="malignant", subtype="dcis")
        # benign arm of the dcis task: any non-dcis benign lesion
        return sample_spec(config, rng, pathology="benign")
    if kind == "ncm":
        spec = sample_spec(config, rng, pathology=pathology, ncm=True)
        if spec.is_dcis:  # dcis never carries ncm; resample subtype
            return sample_tail_spec(config, rng, kind, pathology)
        return spec
    if kind == "cal":
        return sample_spec(config, rng, pathology=pathology, cal=True)
    raise ValueError(f"unknown tail kind {kind!r}")
