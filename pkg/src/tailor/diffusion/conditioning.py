"""Condition vectors: pathology / tail category / device / lesion box slots.

A None slot marks a dropped condition; it contributes exactly zero to the
condition embedding, so the fully-empty vector is the unconditional input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATHOLOGIES = ("benign", "malignant")
TAIL_CATEGORIES = ("ncm", "cal", "dcis")
DEVICES = ("A", "B", "C")


@dataclass(frozen=True)
class ConditionVector:
    pathology: str | None = None
    tail_category: str | None = None
    device: str | None = None
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.pathology is not None and self.pathology not in PATHOLOGIES:
            raise ValueError(f"bad pathology {self.pathology!r}")
        if self.tail_category is not None and self.tail_category not in TAIL_CATEGORIES:
            raise ValueError(f"bad tail category {self.tail_category!r}")
        if self.device is not None and self.device not in DEVICES:
            raise ValueError(f"bad device {self.device!r}")
        if self.bbox is not None and len(self.bbox) != 4:
            raise ValueError("bbox needs 4 coordinates")

    @property
    def is_unconditional(self) -> bool:
        return (self.pathology is None and self.tail_category is None
                and self.device is None and self.bbox is None)

    @classmethod
    def unconditional(cls) -> "ConditionVector":
        return cls()


@dataclass
class CondBatch:
    """Integer-encoded batch of conditions (-1 marks an empty slot)."""

    pathology: np.ndarray
    tail: np.ndarray
    device: np.ndarray
    bbox: np.ndarray       # (B, 4) zeros where absent
    bbox_mask: np.ndarray  # (B,) 1.0 where present

    def __len__(self) -> int:
        return len(self.pathology)


def encode_conditions(conds: list[ConditionVector]) -> CondBatch:
    n = len(conds)
    path = np.full(n, -1, dtype=np.int64)
    tail = np.full(n, -1, dtype=np.int64)
    dev = np.full(n, -1, dtype=np.int64)
    bbox = np.zeros((n, 4), dtype=np.float32)
    mask = np.zeros(n, dtype=np.float32)
    for i, c in enumerate(conds):
        if c.pathology is not None:
            path[i] = PATHOLOGIES.index(c.pathology)
        if c.tail_category is not None:
            tail[i] = TAIL_CATEGORIES.index(c.tail_category)
        if c.device is not None:
            dev[i] = DEVICES.index(c.device)
        if c.bbox is not None:
            bbox[i] = c.bbox
            mask[i] = 1.0
    return CondBatch(path, tail, dev, bbox, mask)
