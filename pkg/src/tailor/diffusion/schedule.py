"""Noise schedule and the closed-form forward (noising) process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule; arrays indexed 0..T-1 for steps t=1..T."""

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 2:
            raise ValueError("need at least 2 steps")
        if betas.min() <= 0 or betas.max() >= 1:
            raise ValueError(f"betas outside (0, 1): [{betas.min()}, {betas.max()}]")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def terminal_alpha_bar(self) -> float:
        return float(self.alpha_bars[-1])

    def alpha_bar(self, t) -> np.ndarray:
        """alpha_bar at integer steps t in 1..T."""
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"t outside [1, {self.T}]")
        return self.alpha_bars[t - 1]

    # continuous-time interpolants used by the fast ODE sampler -------------
    def log_alpha_bar_cont(self, t) -> np.ndarray:
        """Piecewise-linear log alpha_bar over t in [0, T], with value 0 at t=0."""
        knots_t = np.arange(0, self.T + 1, dtype=np.float64)
        knots = np.concatenate([[0.0], np.log(self.alpha_bars)])
        return np.interp(np.asarray(t, dtype=np.float64), knots_t, knots)

    def marginal_coeffs(self, t) -> tuple[np.ndarray, np.ndarray]:
        """(a, s) with a=sqrt(alpha_bar(t)), s=sqrt(1-alpha_bar(t)), continuous t."""
        log_ab = self.log_alpha_bar_cont(t)
        ab = np.exp(log_ab)
        return np.sqrt(ab), np.sqrt(np.maximum(1.0 - ab, 1e-12))

    def half_log_snr(self, t) -> np.ndarray:
        a, s = self.marginal_coeffs(t)
        return np.log(a / s)

    def inverse_half_log_snr(self, lam) -> np.ndarray:
        """t(lambda) on a fine grid; lambda decreases as t grows."""
        t_fine = np.linspace(1.0, float(self.T), 8 * self.T)
        lam_fine = self.half_log_snr(t_fine)
        # interp needs ascending x: lambda is descending in t
        return np.interp(np.asarray(lam, dtype=np.float64),
                         lam_fine[::-1], t_fine[::-1])


def make_schedule(T: int, beta_min: float, beta_max: float, kind: str = "linear") -> NoiseSchedule:
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    if not (0 < beta_min < beta_max < 1):
        raise ValueError(f"need 0 < beta_min < beta_max < 1, got ({beta_min}, {beta_max})")
    betas = np.linspace(beta_min, beta_max, T)
    return NoiseSchedule(betas)


def default_schedule(T: int = 200) -> NoiseSchedule:
    """Desk default: the canonical (1e-4, 0.02)@1000 endpoints scaled by 1000/T
    so the terminal signal level stays negligible at any step count."""
    scale = 1000.0 / T
    return make_schedule(T, min(1e-4 * scale, 0.01), min(0.02 * scale, 0.5))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps, with per-example integer t."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    ab = schedule.alpha_bar(t)
    extra = x0.ndim - np.ndim(ab)
    if extra and np.ndim(ab):
        ab = ab.reshape(ab.shape + (1,) * extra)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
