"""Evaluation statistics: ROC/AUC, operating points, bootstrap CIs,
paired permutation tests, and DeLong's test for correlated AUCs.

AUC uses the midrank (tie-aware) estimator, identical to pairwise
concordance with ties counted half. DeLong variances come from the
placement-value (structural components) decomposition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class SingleClassError(ValueError):
    """An operation needed both classes but got one."""


class PairingError(ValueError):
    """Paired inputs disagree in length or lesion ids."""


@dataclass
class ScoredSet:
    """Paired (score, label) rows with optional subtype / lesion id columns."""

    scores: np.ndarray
    labels: np.ndarray
    subtypes: list[str] | None = None
    lesion_ids: list[str] | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be matching 1-D arrays")
        if self.lesion_ids is not None and len(set(self.lesion_ids)) != len(self.lesion_ids):
            raise ValueError("lesion ids must be unique")

    def __len__(self) -> int:
        return len(self.scores)

    def require_both_classes(self) -> None:
        if len(np.unique(self.labels)) < 2:
            raise SingleClassError("need at least one positive and one negative")


@dataclass
class BootstrapCI:
    estimate: float
    low: float
    high: float
    level: float
    replications: int
    redrawn: int = 0


@dataclass
class MetricReport:
    metric: str
    estimate: float
    ci: BootstrapCI | None = None
    p_values: dict = field(default_factory=dict)
    threshold: float | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"metric": self.metric, "estimate": self.estimate}
        if self.ci is not None:
            out["ci"] = {"level": self.ci.level, "low": self.ci.low, "high": self.ci.high,
                         "replications": self.ci.replications, "redrawn": self.ci.redrawn}
        if self.p_values:
            out["p_values"] = self.p_values
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.provenance:
            out["provenance"] = self.provenance
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _midrank(x: np.ndarray) -> np.ndarray:
    """Midranks (average rank for ties), 1-based."""
    order = np.argsort(x, kind="mergesort")
    z = x[order]
    n = len(x)
    ranks = np.zeros(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and z[j] == z[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def auc_from_arrays(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    m = int(pos.sum())
    n = len(labels) - m
    if m == 0 or n == 0:
        raise SingleClassError("AUC needs both classes")
    ranks = _midrank(scores)
    return float((ranks[pos].sum() - m * (m + 1) / 2) / (m * n))


def roc_auc(s: ScoredSet) -> tuple[float, list[tuple[float, float, float]]]:
    """AUC plus the full threshold-sweep curve as (fpr, tpr, threshold)."""
    s.require_both_classes()
    auc = auc_from_arrays(s.scores, s.labels)
    thresholds = np.concatenate([[np.inf], np.unique(s.scores)[::-1]])
    pos = s.labels == 1
    p, n = pos.sum(), (~pos).sum()
    curve = []
    for thr in thresholds:
        predicted = s.scores >= thr
        tpr = float((predicted & pos).sum() / p)
        fpr = float((predicted & ~pos).sum() / n)
        curve.append((fpr, tpr, float(thr)))
    return auc, curve


def sens_spec(s: ScoredSet, threshold: float) -> tuple[float | None, float | None]:
    """Sensitivity/specificity with positives called at score >= threshold.

    A missing class yields None for its metric rather than a fake zero.
    """
    pos = s.labels == 1
    predicted = s.scores >= threshold
    sens = float((predicted & pos).sum() / pos.sum()) if pos.any() else None
    neg = ~pos
    spec = float((~predicted & neg).sum() / neg.sum()) if neg.any() else None
    return sens, spec


def spec_at_fixed_sens(s: ScoredSet, target_sens: float = 0.98) -> tuple[float, float]:
    """Largest threshold whose sensitivity still reaches the target."""
    pos_scores = s.scores[s.labels == 1]
    if len(pos_scores) == 0:
        raise SingleClassError("no positives: fixed-sensitivity threshold undefined")
    if not 0 <= target_sens <= 1:
        raise ValueError(f"target sensitivity {target_sens} outside [0, 1]")
    candidates = np.unique(s.scores)[::-1]
    for thr in candidates:
        sens = float((pos_scores >= thr).mean())
        if sens >= target_sens:
            _, spec = sens_spec(s, float(thr))
            return float(thr), (spec if spec is not None else float("nan"))
    raise ValueError(f"sensitivity target {target_sens} unattainable")


def subtype_breakdown(s: ScoredSet, threshold: float) -> dict[str, dict[str, int]]:
    """Per-subtype correct counts at a fixed threshold."""
    if s.subtypes is None:
        raise ValueError("subtype column not populated")
    out: dict[str, dict[str, int]] = {}
    for score, label, subtype in zip(s.scores, s.labels, s.subtypes):
        cell = out.setdefault(subtype, {"total": 0, "correct": 0})
        cell["total"] += 1
        cell["correct"] += int((score >= threshold) == bool(label))
    return out


def bootstrap_ci(metric_fn: Callable[[np.ndarray, np.ndarray], float], s: ScoredSet,
                 replications: int = 1000, level: float = 0.95, seed: int = 0) -> BootstrapCI:
    """Percentile bootstrap over lesion rows; degenerate resamples are redrawn."""
    if replications < 100:
        raise ValueError("need at least 100 bootstrap replications")
    rng = np.random.default_rng(seed)
    n = len(s)
    estimate = float(metric_fn(s.scores, s.labels))
    both = len(np.unique(s.labels)) == 2
    values = np.empty(replications)
    redrawn = 0
    for b in range(replications):
        while True:
            idx = rng.integers(0, n, size=n)
            if not both or len(np.unique(s.labels[idx])) == 2:
                break
            redrawn += 1
        values[b] = metric_fn(s.scores[idx], s.labels[idx])
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(values, [alpha, 1.0 - alpha])
    return BootstrapCI(estimate=estimate, low=float(low), high=float(high),
                       level=level, replications=replications, redrawn=redrawn)


def paired_delta_ci(scores_a: np.ndarray, scores_b: np.ndarray, labels: np.ndarray,
                    metric_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
                    replications: int = 1000, level: float = 0.95,
                    seed: int = 0) -> BootstrapCI:
    """Percentile bootstrap of metric(A) - metric(B) over paired lesion rows."""
    metric_fn = metric_fn or auc_from_arrays
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    labels = np.asarray(labels)
    if a.shape != b.shape or a.shape != labels.shape:
        raise PairingError(f"unpaired inputs: {a.shape} vs {b.shape} vs {labels.shape}")
    rng = np.random.default_rng(seed)
    n = len(a)
    estimate = float(metric_fn(a, labels) - metric_fn(b, labels))
    values = np.empty(replications)
    redrawn = 0
    both = len(np.unique(labels)) == 2
    for r in range(replications):
        while True:
            idx = rng.integers(0, n, size=n)
            if not both or len(np.unique(labels[idx])) == 2:
                break
            redrawn += 1
        values[r] = metric_fn(a[idx], labels[idx]) - metric_fn(b[idx], labels[idx])
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(values, [alpha, 1.0 - alpha])
    return BootstrapCI(estimate=estimate, low=float(low), high=float(high),
                       level=level, replications=replications, redrawn=redrawn)


@dataclass
class PermutationResult:
    p: float
    observed_delta: float
    permutations: int


def permutation_test(scores_a: np.ndarray, scores_b: np.ndarray, labels: np.ndarray,
                     metric_fn: Callable[[np.ndarray, np.ndarray], float] = auc_from_arrays,
                     permutations: int = 10_000, seed: int = 0,
                     lesion_ids_a: Sequence[str] | None = None,
                     lesion_ids_b: Sequence[str] | None = None) -> PermutationResult:
    """Two-sided paired permutation test: per-lesion swap of method scores.

    p = (1 + #{|delta*| >= |delta|}) / (n + 1), never exactly zero.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    labels = np.asarray(labels)
    if a.shape != b.shape or a.shape != labels.shape:
        raise PairingError(f"unpaired inputs: {a.shape} vs {b.shape} vs {labels.shape}")
    if lesion_ids_a is not None and lesion_ids_b is not None \
            and list(lesion_ids_a) != list(lesion_ids_b):
        raise PairingError("lesion ids disagree between the two methods")
    observed = metric_fn(a, labels) - metric_fn(b, labels)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(permutations):
        swap = rng.random(len(a)) < 0.5
        a_star = np.where(swap, b, a)
        b_star = np.where(swap, a, b)
        delta = metric_fn(a_star, labels) - metric_fn(b_star, labels)
        if abs(delta) >= abs(observed) - 1e-12:
            hits += 1
    return PermutationResult(p=(1 + hits) / (permutations + 1),
                             observed_delta=float(observed), permutations=permutations)


@dataclass
class DeLongResult:
    auc_a: float
    auc_b: float
    var_a: float
    var_b: float
    cov_ab: float
    z: float | None
    p: float | None
    degenerate: bool = False


def _placements(scores: np.ndarray, pos: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """AUC plus per-positive (v01) and per-negative (v10) structural components."""
    m = int(pos.sum())
    n = len(scores) - m
    tx = _midrank(scores[pos])
    ty = _midrank(scores[~pos])
    tz = _midrank(scores)
    auc = float((tz[pos].sum() - m * (m + 1) / 2) / (m * n))
    v01 = (tz[pos] - tx) / n
    v10 = 1.0 - (tz[~pos] - ty) / m
    return auc, v01, v10


def _norm_sf2(z: float) -> float:
    """Two-sided standard normal tail: 2 * (1 - Phi(|z|))."""
    return float(math.erfc(abs(z) / math.sqrt(2.0)))


def delong_test(scores_a: np.ndarray, scores_b: np.ndarray, labels: np.ndarray) -> DeLongResult:
    """Compare two correlated AUCs over the same labeled rows."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    labels = np.asarray(labels)
    if a.shape != b.shape or a.shape != labels.shape:
        raise PairingError(f"unpaired inputs: {a.shape} vs {b.shape} vs {labels.shape}")
    pos = labels == 1
    m = int(pos.sum())
    n = len(labels) - m
    if m == 0 or n == 0:
        raise SingleClassError("DeLong test needs both classes")
    auc_a, v01_a, v10_a = _placements(a, pos)
    auc_b, v01_b, v10_b = _placements(b, pos)
    s01 = np.cov(np.stack([v01_a, v01_b])) if m > 1 else np.zeros((2, 2))
    s10 = np.cov(np.stack([v10_a, v10_b])) if n > 1 else np.zeros((2, 2))
    var_a = s01[0, 0] / m + s10[0, 0] / n
    var_b = s01[1, 1] / m + s10[1, 1] / n
    cov_ab = s01[0, 1] / m + s10[0, 1] / n
    var_delta = var_a + var_b - 2 * cov_ab
    if var_delta <= 1e-16:
        if abs(auc_a - auc_b) < 1e-12:
            return DeLongResult(auc_a, auc_b, var_a, var_b, cov_ab, z=0.0, p=1.0)
        return DeLongResult(auc_a, auc_b, var_a, var_b, cov_ab, z=None, p=None,
                            degenerate=True)
    z = (auc_a - auc_b) / math.sqrt(var_delta)
    return DeLongResult(auc_a, auc_b, var_a, var_b, cov_ab, z=float(z), p=_norm_sf2(z))


# ---------------------------------------------------------------------------
# curve serialization
# ---------------------------------------------------------------------------

def save_roc_csv(curve: list[tuple[float, float, float]], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["fpr,tpr,threshold"]
    for fpr, tpr, thr in curve:
        lines.append(f"{fpr:.6f},{tpr:.6f},{thr:.6f}" if math.isfinite(thr)
                     else f"{fpr:.6f},{tpr:.6f},inf")
    path.write_text("\n".join(lines) + "\n")


def save_roc_svg(curves: dict[str, list[tuple[float, float, float]]], path: Path | str,
                 title: str = "ROC") -> None:
    """Minimal standalone SVG: one polyline per named curve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    w, h, margin = 420, 420, 45
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

    def sx(x):
        return margin + x * (w - 2 * margin)

    def sy(y):
        return h - margin - y * (h - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{w / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(0)}" stroke="black"/>',
             f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(0)}" y2="{sy(1)}" stroke="black"/>',
             f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" '
             f'stroke="#bbbbbb" stroke-dasharray="4"/>',
             f'<text x="{sx(0.5)}" y="{h - 10}" text-anchor="middle" font-size="11">'
             f'false positive rate</text>']
    for i, (name, curve) in enumerate(curves.items()):
        pts = " ".join(f"{sx(fpr):.1f},{sy(tpr):.1f}" for fpr, tpr, _ in curve)
        color = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{margin + 6}" y="{margin + 14 + 14 * i}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts))
