"""Dataset manifest: typed rows binding images to labels, CSV on disk.

Header is fixed: id,path,pathology,subtype,ncm,cal,dcis,device,bbox_cx,
bbox_cy,bbox_hw,bbox_hh,label_standard,split. Booleans are 0/1, floats
carry 6 decimals. Paths are stored relative to the manifest file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
from PIL import Image

HEADER = ["id", "path", "pathology", "subtype", "ncm", "cal", "dcis", "device",
          "bbox_cx", "bbox_cy", "bbox_hw", "bbox_hh", "label_standard", "split"]

PATHOLOGIES = ("benign", "malignant")
LABEL_STANDARDS = ("gold", "silver", "synthetic")


@dataclass
class ManifestRow:
    id: str
    path: str
    pathology: str
    subtype: str
    ncm: bool
    cal: bool
    dcis: bool
    device: str
    bbox: tuple[float, float, float, float]
    label_standard: str
    split: str

    def __post_init__(self):
        if self.pathology not in PATHOLOGIES:
            raise ValueError(f"row {self.id}: bad pathology {self.pathology!r}")
        if self.label_standard not in LABEL_STANDARDS:
            raise ValueError(f"row {self.id}: bad label_standard {self.label_standard!r}")
        cx, cy, hw, hh = self.bbox
        if not (0 <= cx - hw and cx + hw <= 1 and 0 <= cy - hh and cy + hh <= 1):
            raise ValueError(f"row {self.id}: bbox {self.bbox} leaves the unit square")

    @property
    def label(self) -> int:
        return 1 if self.pathology == "malignant" else 0

    def to_record(self) -> list[str]:
        cx, cy, hw, hh = self.bbox
        return [self.id, self.path, self.pathology, self.subtype,
                str(int(self.ncm)), str(int(self.cal)), str(int(self.dcis)), self.device,
                f"{cx:.6f}", f"{cy:.6f}", f"{hw:.6f}", f"{hh:.6f}",
                self.label_standard, self.split]

    @classmethod
    def from_record(cls, rec: dict[str, str]) -> "ManifestRow":
        return cls(
            id=rec["id"], path=rec["path"], pathology=rec["pathology"],
            subtype=rec["subtype"], ncm=rec["ncm"] == "1", cal=rec["cal"] == "1",
            dcis=rec["dcis"] == "1", device=rec["device"],
            bbox=(float(rec["bbox_cx"]), float(rec["bbox_cy"]),
                  float(rec["bbox_hw"]), float(rec["bbox_hh"])),
            label_standard=rec["label_standard"], split=rec["split"],
        )


class DatasetManifest:
    def __init__(self, rows: Iterable[ManifestRow], root: Path | str = "."):
        self.rows = list(rows)
        self.root = Path(root)
        ids = [r.id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate row ids in manifest")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    def filter(self, pred: Callable[[ManifestRow], bool]) -> "DatasetManifest":
        return DatasetManifest([r for r in self.rows if pred(r)], self.root)

    def split(self, name: str) -> "DatasetManifest":
        return self.filter(lambda r: r.split == name)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.rows], dtype=np.int64)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.pathology] = out.get(r.pathology, 0) + 1
        return out

    def image_path(self, row: ManifestRow) -> Path:
        return (self.root / row.path).resolve()

    def load_image(self, row: ManifestRow) -> np.ndarray:
        with Image.open(self.image_path(row)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        return arr

    def load_images(self) -> np.ndarray:
        """All images as (N, 1, H, W) float32 in [0, 1]."""
        imgs = [self.load_image(r) for r in self.rows]
        return np.stack(imgs)[:, None, :, :]

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HEADER)
            for row in self.rows:
                writer.writerow(row.to_record())
        return path

    @classmethod
    def load(cls, path: Path | str) -> "DatasetManifest":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != HEADER:
                raise ValueError(f"{path}: unexpected manifest header {reader.fieldnames}")
            rows = [ManifestRow.from_record(rec) for rec in reader]
        return cls(rows, root=path.parent)


def relabel(row: ManifestRow, **overrides) -> ManifestRow:
    return replace(row, **overrides)


def merge_manifests(*manifests: DatasetManifest) -> DatasetManifest:
    """Combine manifests with different roots by absolutizing row paths.
    Colliding ids get a per-source prefix."""
    all_ids = [r.id for m in manifests for r in m.rows]
    collide = len(set(all_ids)) != len(all_ids)
    rows = []
    for i, m in enumerate(manifests):
        for r in m.rows:
            rid = f"m{i}:{r.id}" if collide else r.id
            rows.append(replace(r, id=rid, path=str((m.root / r.path).resolve())))
    return DatasetManifest(rows, root=Path("/"))


def save_image_png(pixels: np.ndarray, path: Path | str) -> None:
    """Write [0,1] grayscale pixels as deterministic 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")
