"""Hand-coded feature detectors: independent checks that rendered images
actually carry their labeled features (and oracles for downstream tests)."""

from __future__ import annotations

import numpy as np

from .types import PhantomImage

# calibrated on the default 32x32 world; see tests for the accuracy gate
CAL_PIXEL_THRESHOLD = 0.84
NCM_SHARPNESS_THRESHOLD = 0.075


def _pixels(img) -> np.ndarray:
    return img.pixels if isinstance(img, PhantomImage) else np.asarray(img)


def _geometry(img: np.ndarray, bbox) -> np.ndarray:
    size_y, size_x = img.shape
    cx, cy, hw, hh = bbox
    ys, xs = np.mgrid[0:size_y, 0:size_x].astype(np.float32)
    xs = (xs + 0.5) / size_x
    ys = (ys + 0.5) / size_y
    return np.sqrt(((xs - cx) / hw) ** 2 + ((ys - cy) / hh) ** 2)


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def count_bright_foci(img, bbox, threshold: float = CAL_PIXEL_THRESHOLD) -> int:
    """Connected components of bright pixels inside the lesion core."""
    px = _pixels(img)
    d = _geometry(px, bbox)
    mask = (px >= threshold) & (d < 0.85)
    seen = np.zeros_like(mask, dtype=bool)
    count = 0
    for y0, x0 in np.argwhere(mask):
        if seen[y0, x0]:
            continue
        count += 1
        stack = [(int(y0), int(x0))]
        seen[y0, x0] = True
        while stack:
            y, x = stack.pop()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < mask.shape[0] and 0 <= nx < mask.shape[1] \
                        and mask[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    stack.append((ny, nx))
    return count


def detect_cal(img, bbox, min_components: int = 2) -> bool:
    return count_bright_foci(img, bbox) >= min_components


def boundary_sharpness(img, bbox) -> float:
    """Upper-decile gradient magnitude on the contour ring.

    Bright foci (and their immediate neighbours) are masked out so
    calcifications do not mimic a crisp margin.
    """
    px = _pixels(img)
    d = _geometry(px, bbox)
    gy, gx = np.gradient(px.astype(np.float64))
    mag = np.sqrt(gx * gx + gy * gy)
    bright = _dilate(_dilate(px > 0.82))
    ring = (d > 0.7) & (d < 1.3) & ~bright
    if not ring.any():
        return 0.0
    return float(np.quantile(mag[ring], 0.9))


def detect_ncm(img, bbox, threshold: float = NCM_SHARPNESS_THRESHOLD) -> bool:
    return boundary_sharpness(img, bbox) < threshold
