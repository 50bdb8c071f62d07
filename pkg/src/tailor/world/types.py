"""Phantom-lesion world: ground-truth lesion descriptions and configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEVICES = ("A", "B", "C")
TAIL_FEATURES = ("ncm", "cal")


@dataclass(frozen=True)
class PhantomSpec:
    """Complete ground truth for one lesion; the renderer is a pure function of it."""

    pathology: str
    subtype: str
    ncm: bool
    cal: bool
    is_dcis: bool
    device: str
    bbox: tuple[float, float, float, float]  # cx, cy, half-width, half-height
    seed: int

    def __post_init__(self):
        if self.pathology not in ("benign", "malignant"):
            raise ValueError(f"bad pathology {self.pathology!r}")
        if self.is_dcis and self.pathology != "malignant":
            raise ValueError("is_dcis requires malignant pathology")
        if self.device not in DEVICES:
            raise ValueError(f"bad device {self.device!r}")
        cx, cy, hw, hh = self.bbox
        if hw <= 0 or hh <= 0:
            raise ValueError(f"degenerate bbox {self.bbox}")
        if cx - hw < 0 or cx + hw > 1 or cy - hh < 0 or cy + hh > 1:
            raise ValueError(f"bbox {self.bbox} leaves the unit square")


@dataclass(frozen=True)
class PhantomImage:
    pixels: np.ndarray  # (H, W) float32 in [0, 1]

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {p.shape}")
        if p.min() < 0 or p.max() > 1:
            raise ValueError("pixels outside [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


_DEFAULT_BENIGN = {
    "fibroadenoma": 0.300,
    "adenosis": 0.197,
    "cyst": 0.180,
    "papilloma": 0.120,
    "mastitis": 0.103,
    "radial_scar": 0.100,
}
_DEFAULT_MALIGNANT = {
    "ibc": 0.818,
    "ilc": 0.060,
    "dcis": 0.050,
    "mucinous_ca": 0.040,
    "papillary_ca": 0.032,
}
# per-subtype conditional feature probabilities (ncm, cal)
_DEFAULT_FEATURES = {
    "fibroadenoma": (0.02, 0.06),
    "adenosis": (0.02, 0.04),
    "cyst": (0.01, 0.02),
    "papilloma": (0.04, 0.05),
    "mastitis": (0.25, 0.04),
    "radial_scar": (0.35, 0.06),
    "ibc": (0.88, 0.30),
    "ilc": (0.85, 0.15),
    "dcis": (0.00, 0.40),
    "mucinous_ca": (0.50, 0.10),
    "papillary_ca": (0.60, 0.20),
}


@dataclass(frozen=True)
class WorldConfig:
    image_size: int = 32
    malignant_fraction: float = 0.5
    benign_subtypes: dict = field(default_factory=lambda: dict(_DEFAULT_BENIGN))
    malignant_subtypes: dict = field(default_factory=lambda: dict(_DEFAULT_MALIGNANT))
    feature_probs: dict = field(default_factory=lambda: dict(_DEFAULT_FEATURES))
    device_mix: dict = field(default_factory=lambda: {"A": 0.5, "B": 0.3, "C": 0.2})
    # rendering knobs; interior level depends on pathology and tail status:
    # in-situ lesions sit between the classes (their benign look is the
    # point), and the benign NCM subtypes (mastitis, radial scar) are
    # themselves hypoechoic, which is what makes them error-prone
    benign_brightness: tuple[float, float] = (0.55, 0.05)
    malignant_brightness: tuple[float, float] = (0.375, 0.05)
    dcis_brightness: tuple[float, float] = (0.48, 0.05)
    benign_ncm_brightness: tuple[float, float] = (0.46, 0.05)
    benign_cal_brightness: tuple[float, float] = (0.50, 0.05)
    interior_texture: float = 0.10
    dcis_texture: float = 0.22
    speckle_strength: float = 0.12
    noise_strength: float = 0.028
    rim_strength: float = 0.14
    bbox_hw_range: tuple[float, float] = (0.13, 0.26)
    bbox_hh_range: tuple[float, float] = (0.11, 0.22)

    def __post_init__(self):
        for name, table in (("benign_subtypes", self.benign_subtypes),
                            ("malignant_subtypes", self.malignant_subtypes),
                            ("device_mix", self.device_mix)):
            total = sum(table.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{name} frequencies sum to {total}, expected 1")
        if self.image_size < 16 or self.image_size > 160:
            raise ValueError(f"image_size {self.image_size} outside [16, 160]")

    def with_overrides(self, **kwargs) -> "WorldConfig":
        return replace(self, **kwargs)

    def subtype_table(self, pathology: str) -> dict:
        return self.malignant_subtypes if pathology == "malignant" else self.benign_subtypes


def derive_seed(seed: int, *salts: int) -> int:
    """Stable per-item seed derivation (splitmix-style mixing)."""
    x = np.uint64(seed)
    for salt in salts:
        x = np.uint64(x) ^ (np.uint64(salt) + np.uint64(0x9E3779B97F4A7C15)
                            + (x << np.uint64(6)) + (x >> np.uint64(2)))
    return int(x)
