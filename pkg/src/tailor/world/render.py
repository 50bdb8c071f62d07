"""Renderer: PhantomSpec -> grayscale ultrasound-like image.

Feature semantics: malignancy darkens the lesion interior and
irregularizes its contour; NCM feathers the boundary; CAL plants bright
foci inside the lesion; DCIS keeps a regular, crisp-margined shape while
retaining the malignant interior level.
"""

from __future__ import annotations

import zlib

import numpy as np

from .types import PhantomImage, PhantomSpec, WorldConfig


def _rng_for(spec: PhantomSpec, rng) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(spec.seed)
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    return rng


def _smooth_noise(rng: np.random.Generator, h: int, w: int, sigma: float) -> np.ndarray:
    """Correlated zero-mean noise: white noise blurred separably."""
    noise = rng.standard_normal((h, w)).astype(np.float32)
    return gaussian_blur(noise, sigma)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    radius = max(1, int(3 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float32)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(img, ((radius, radius), (0, 0)), mode="reflect")
    out = np.apply_along_axis(lambda col: np.convolve(col, kernel, mode="valid"), 0, padded)
    padded = np.pad(out, ((0, 0), (radius, radius)), mode="reflect")
    out = np.apply_along_axis(lambda row: np.convolve(row, kernel, mode="valid"), 1, padded)
    return out.astype(np.float32)


def _background(rng: np.random.Generator, size: int, config: WorldConfig) -> np.ndarray:
    ys = np.linspace(0.0, 1.0, size, dtype=np.float32)
    # skin / subcutaneous fat / gland / deep tissue bands
    profile = np.interp(ys, [0.0, 0.08, 0.14, 0.30, 0.42, 0.62, 0.72, 1.0],
                        [0.78, 0.74, 0.46, 0.50, 0.62, 0.58, 0.38, 0.33]).astype(np.float32)
    base = np.repeat(profile[:, None], size, axis=1)
    wobble = 0.04 * _smooth_noise(rng, size, size, sigma=size * 0.12)
    speckle = config.speckle_strength * _smooth_noise(rng, size, size, sigma=1.1)
    fine = config.noise_strength * rng.standard_normal((size, size)).astype(np.float32)
    return base * (1.0 + speckle) + wobble + fine


def _lesion_geometry(spec: PhantomSpec, rng: np.random.Generator, size: int):
    """Return (normalized radial field d, angle-modulated boundary radius field)."""
    cx, cy, hw, hh = spec.bbox
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    xs = (xs + 0.5) / size
    ys = (ys + 0.5) / size
    dx = (xs - cx) / hw
    dy = (ys - cy) / hh
    d = np.sqrt(dx * dx + dy * dy)
    theta = np.arctan2(dy, dx)
    irregular = spec.pathology == "malignant" and not spec.is_dcis
    amp = 0.20 if irregular else 0.035
    r_mod = np.ones_like(d)
    for k in (2, 3, 4, 5):
        a = rng.uniform(0.3, 1.0) * amp / 2.2
        phase = rng.uniform(0, 2 * np.pi)
        r_mod += a * np.sin(k * theta + phase).astype(np.float32)
    # keep the lesion comfortably inside its declared bbox
    r_mod = np.clip(r_mod, 0.55, 0.98)
    return d, r_mod


def _interior_level(spec: PhantomSpec, config: WorldConfig) -> tuple[float, float]:
    if spec.is_dcis:
        return config.dcis_brightness
    if spec.pathology == "malignant":
        return config.malignant_brightness
    if spec.ncm:
        return config.benign_ncm_brightness
    if spec.cal:
        return config.benign_cal_brightness
    return config.benign_brightness


def _cal_foci(rng: np.random.Generator, size: int, d: np.ndarray) -> np.ndarray:
    """2-6 bright pixel clusters strictly inside the lesion core.

    Placements keep a minimum separation so the foci stay distinct
    connected components after blurring device styles.
    """
    foci = np.zeros((size, size), dtype=np.float32)
    interior = np.argwhere(d < 0.62)
    if len(interior) == 0:
        return foci
    n = int(rng.integers(2, 7))
    chosen: list[tuple[int, int]] = []
    candidates = interior[rng.permutation(len(interior))]
    for py, px in candidates:
        if len(chosen) >= n:
            break
        if all(max(abs(int(py) - y), abs(int(px) - x)) >= 4 for y, x in chosen):
            chosen.append((int(py), int(px)))
    if len(chosen) < 2:  # tiny lesion: fall back to any two distinct spots
        chosen = [tuple(map(int, c)) for c in candidates[:2]]
    for y0, x0 in chosen:
        v = float(rng.uniform(0.93, 1.0))
        side = int(rng.integers(2, 4))  # 2x2 or 3x3 cluster
        foci[y0:y0 + side, x0:x0 + side] = np.maximum(foci[y0:y0 + side, x0:x0 + side], v)
    return foci


def render(spec: PhantomSpec, rng=None, size: int | None = None,
           config: WorldConfig | None = None) -> PhantomImage:
    """Render a spec; deterministic given (spec, seed)."""
    config = config or WorldConfig()
    size = size or config.image_size
    cx, cy, hw, hh = spec.bbox
    if hw * hh <= 0:
        raise ValueError(f"degenerate bbox {spec.bbox}")
    gen = _rng_for(spec, rng)

    img = _background(gen, size, config)

    d, r_mod = _lesion_geometry(spec, gen, size)
    edge_width = 0.45 if spec.ncm else 0.05
    alpha = 1.0 / (1.0 + np.exp(np.clip((d - r_mod) / edge_width, -40, 40)))

    mean, sd = _interior_level(spec, config)
    level = float(np.clip(gen.normal(mean, sd), 0.12, 0.88))
    tex_amp = config.dcis_texture if spec.is_dcis else config.interior_texture
    texture = level * (1.0 + tex_amp * _smooth_noise(gen, size, size, sigma=1.0))
    img = img * (1.0 - alpha) + texture * alpha

    if not spec.ncm:
        # circumscribed interface: thin echogenic rim just outside the contour
        img = img + config.rim_strength * np.exp(-((d - r_mod - 0.04) / 0.07) ** 2)

    if spec.cal:
        foci = _cal_foci(gen, size, d)
        img = np.maximum(img, foci)

    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return PhantomImage(img)


def apply_device_style(img: PhantomImage, device: str) -> PhantomImage:
    """Parametric device transforms; pure function of (pixels, device)."""
    if device not in ("A", "B", "C"):
        raise ValueError(f"unknown device {device!r}")
    px = img.pixels
    if device == "A":
        return PhantomImage(px.copy())
    if device == "B":
        out = px ** np.float32(0.8)
        seed = zlib.crc32(px.tobytes() + b"B")
        gen = np.random.default_rng(seed)
        out = out + 0.018 * gen.standard_normal(px.shape).astype(np.float32)
        return PhantomImage(np.clip(out, 0.0, 1.0).astype(np.float32))
    # device C: contrast stretch then mild blur
    out = (px - 0.5) * np.float32(1.35) + 0.5
    out = gaussian_blur(np.clip(out, 0.0, 1.0), sigma=0.55)
    return PhantomImage(np.clip(out, 0.0, 1.0).astype(np.float32))


def render_styled(spec: PhantomSpec, rng=None, size: int | None = None,
                  config: WorldConfig | None = None) -> PhantomImage:
    """Render then apply the spec's own device style."""
    return apply_device_style(render(spec, rng=rng, size=size, config=config), spec.device)
