"""Guided sampling: classifier-free mixing, ancestral chain, fast ODE solver.

All samplers work in model space [-1, 1] and return images in [0, 1].
A "model function" is any callable (x, t, cond) -> eps ndarray, so the
analytic Gaussian toy plugs in exactly where the U-Net does.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np

from .conditioning import ConditionVector, encode_conditions
from .schedule import NoiseSchedule

ModelFn = Callable[[np.ndarray, np.ndarray, object], np.ndarray]


class SamplerError(RuntimeError):
    pass


def as_model_fn(model) -> ModelFn:
    """Adapt a DenoiserModel (or compatible) to the plain-array interface."""
    if callable(model) and not hasattr(model, "predict"):
        return model
    return lambda x, t, cond: model.predict(x, t, cond)


def cfg_epsilon(model_fn: ModelFn, x_t: np.ndarray, t, cond, w: float) -> np.ndarray:
    """(1+w) * eps(x,t,c) - w * eps(x,t,empty); w=0 returns the conditional
    output bit-for-bit, w=-1 the unconditional one."""
    conds = cond if isinstance(cond, list) else [cond] * len(x_t)
    if all(c.is_unconditional for c in conds):
        raise ValueError("cfg needs a non-empty condition; use the plain model for that")
    eps_cond = model_fn(x_t, t, encode_conditions(conds))
    uncond = [ConditionVector.unconditional()] * len(x_t)
    eps_uncond = model_fn(x_t, t, encode_conditions(uncond))
    return (1.0 + w) * eps_cond - w * eps_uncond


def _to_image(x: np.ndarray) -> np.ndarray:
    return np.clip((x + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)


def ancestral_sample(model, schedule: NoiseSchedule, cond, w: float,
                     rng: np.random.Generator | int, n: int = 1,
                     image_size: int = 32, guided: bool = True,
                     clip_denoised: bool = True) -> np.ndarray:
    """Full reverse chain; returns (n, 1, H, W) images in [0, 1].

    Each step re-derives the posterior mean from the implied clean image,
    clamped to the data range: with an imperfect denoiser the unclamped
    chain can diverge. For an exact noise predictor the clamp never binds
    (the implied x0 is the posterior mean).
    """
    model_fn = as_model_fn(model)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    x = rng.standard_normal((n, 1, image_size, image_size)).astype(np.float32)
    conds = cond if isinstance(cond, list) else [cond] * n
    for t in range(schedule.T, 0, -1):
        ab = schedule.alpha_bars[t - 1]
        ab_prev = schedule.alpha_bars[t - 2] if t > 1 else 1.0
        alpha = schedule.alphas[t - 1]
        beta = schedule.betas[t - 1]
        if guided:
            eps = cfg_epsilon(model_fn, x, float(t), conds, w)
        else:
            eps = model_fn(x, float(t), encode_conditions(conds))
        x0 = (x - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
        if clip_denoised:
            x0 = np.clip(x0, -1.0, 1.0)
        # posterior mean written in terms of the implied clean image
        mean = (np.sqrt(ab_prev) * beta * x0
                + np.sqrt(alpha) * (1.0 - ab_prev) * x) / (1.0 - ab)
        if not np.all(np.isfinite(mean)):
            raise SamplerError(f"non-finite state at step t={t}")
        if t > 1:
            x = mean + np.sqrt(beta) * rng.standard_normal(x.shape).astype(np.float32)
        else:
            x = mean
        x = x.astype(np.float32)
    return _to_image(x)


def dpm_solver_sample(model, schedule: NoiseSchedule, cond, w: float, steps: int,
                      order: int = 2, rng: np.random.Generator | int = 0, n: int = 1,
                      image_size: int = 32, guided: bool = True,
                      clip_denoised: bool = True) -> np.ndarray:
    """Exponential-integrator sampler in half-log-SNR time, order 1 or 2.

    Nodes are uniform in lambda between t=T and t=1, with a final exact
    denoise from t=1 to the data estimate. Noise estimates are corrected
    so the implied clean image stays in the data range (no-op for an
    exact predictor, stabilizing for a learned one).
    """
    if not 2 <= steps <= schedule.T:
        raise SamplerError(f"steps must lie in [2, {schedule.T}], got {steps}")
    if order not in (1, 2):
        raise SamplerError(f"order must be 1 or 2, got {order}")
    model_fn = as_model_fn(model)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    conds = cond if isinstance(cond, list) else [cond] * n

    def eps_fn(x, t):
        if guided:
            eps = cfg_epsilon(model_fn, x, float(t), conds, w)
        else:
            eps = model_fn(x, float(t), encode_conditions(conds))
        if clip_denoised:
            a, s = schedule.marginal_coeffs(float(t))
            x0 = np.clip((x - s * eps) / a, -1.0, 1.0)
            eps = (x - a * x0) / s
        return eps

    lam_grid = np.linspace(schedule.half_log_snr(schedule.T),
                           schedule.half_log_snr(1.0), steps + 1)
    t_grid = schedule.inverse_half_log_snr(lam_grid)
    t_grid[0], t_grid[-1] = float(schedule.T), 1.0

    x = rng.standard_normal((n, 1, image_size, image_size)).astype(np.float32)
    for i in range(steps):
        t_s, t_t = t_grid[i], t_grid[i + 1]
        lam_s, lam_t = lam_grid[i], lam_grid[i + 1]
        h = lam_t - lam_s
        a_s, _ = schedule.marginal_coeffs(t_s)
        a_t, s_t = schedule.marginal_coeffs(t_t)
        eps_s = eps_fn(x, t_s)
        if order == 1 or h == 0.0:
            x = (a_t / a_s) * x - s_t * np.expm1(h) * eps_s
        else:
            lam_mid = lam_s + 0.5 * h
            t_mid = float(schedule.inverse_half_log_snr(lam_mid))
            a_mid, s_mid = schedule.marginal_coeffs(t_mid)
            x_mid = (a_mid / a_s) * x - s_mid * np.expm1(0.5 * h) * eps_s
            eps_mid = eps_fn(x_mid, t_mid)
            x = (a_t / a_s) * x - s_t * np.expm1(h) * eps_mid
        if not np.all(np.isfinite(x)):
            raise SamplerError(f"non-finite state at node {i} (t={t_t:.2f})")
        x = x.astype(np.float32)
    # final denoise from t=1 to the clean estimate
    a1, s1 = schedule.marginal_coeffs(1.0)
    x0 = (x - s1 * eps_fn(x, 1.0)) / a1
    return _to_image(x0)


# ---------------------------------------------------------------------------
# balanced generation from a recipe
# ---------------------------------------------------------------------------

def load_recipe(path: Path | str) -> list[dict]:
    with open(path) as fh:
        data = json.load(fh)
    entries = data["entries"] if isinstance(data, dict) else data
    for e in entries:
        if "count" not in e or "pathology" not in e:
            raise ValueError(f"recipe entry needs count and pathology: {e}")
    return entries


def generate_balanced(model, schedule: NoiseSchedule, recipe: list[dict],
                      out_dir: Path | str, rng: np.random.Generator | int,
                      image_size: int = 32, batch_size: int = 128,
                      default_w: float = 1.8, name: str = "synthetic",
                      bbox_ranges=((0.13, 0.26), (0.11, 0.22))) -> "DatasetManifest":
    """Sample images under enumerated conditions; manifest rows carry the
    conditions as synthetic labels (label_standard = synthetic)."""
    from ..manifest import DatasetManifest, ManifestRow, save_image_png

    out_dir = Path(out_dir)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    rows = []
    counter = 0
    for entry in recipe:
        count = int(entry["count"])
        if count < 0:
            raise ValueError(f"negative count in recipe entry {entry}")
        if count == 0:
            continue
        w = float(entry.get("guidance_w", default_w))
        sampler = entry.get("sampler", "dpm2")
        steps = int(entry.get("steps", 50))
        devices = ("A", "B", "C") if entry.get("device") is None else (entry["device"],)
        done = 0
        while done < count:
            b = min(batch_size, count - done)
            conds = []
            metas = []
            for j in range(b):
                device = devices[(done + j) % len(devices)]
                if entry.get("bbox_policy", "uniform") == "uniform":
                    hw = float(rng.uniform(*bbox_ranges[0]))
                    hh = float(rng.uniform(*bbox_ranges[1]))
                    cx = float(rng.uniform(hw + 0.02, 1 - hw - 0.02))
                    cy = float(rng.uniform(max(hh + 0.02, 0.30), min(1 - hh - 0.02, 0.78)))
                    bbox = (cx, cy, hw, hh)
                else:
                    bbox = tuple(entry["bbox_policy"])
                conds.append(ConditionVector(pathology=entry["pathology"],
                                             tail_category=entry.get("tail_category"),
                                             device=device, bbox=bbox))
                metas.append((device, bbox))
            if sampler == "ancestral":
                imgs = ancestral_sample(model, schedule, conds, w, rng, n=b,
                                        image_size=image_size)
            elif sampler in ("dpm1", "dpm2"):
                imgs = dpm_solver_sample(model, schedule, conds, w, steps,
                                         order=1 if sampler == "dpm1" else 2,
                                         rng=rng, n=b, image_size=image_size)
            else:
                raise ValueError(f"unknown sampler {sampler!r}")
            for j in range(b):
                row_id = f"S{counter:06d}"
                rel = f"{name}_images/{row_id}.png"
                save_image_png(imgs[j, 0], out_dir / rel)
                tail = entry.get("tail_category")
                device, bbox = metas[j]
                rows.append(ManifestRow(
                    id=row_id, path=rel, pathology=entry["pathology"],
                    subtype=tail or "generated",
                    ncm=tail == "ncm", cal=tail == "cal", dcis=tail == "dcis",
                    device=device, bbox=bbox, label_standard="synthetic", split="train"))
                counter += 1
            done += b
    manifest = DatasetManifest(rows, root=out_dir)
    manifest.save(out_dir / f"{name}.csv")
    return manifest
