"""Gated expert ensemble: a general classifier plus tail-category experts
selected by membership confidence, with fully recomputable decision traces."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EXPERT_KINDS = ("ncm", "cal", "dcis")
DEFAULT_THRESHOLDS = {"ncm": 0.9, "cal": 0.9, "dcis": 0.9}
DEFAULT_WEIGHTS = {"ncm": 2.0, "cal": 2.0, "dcis": 1.0}


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


@dataclass
class ExpertRead:
    confidence: float
    selected: bool
    logit: float | None  # populated only when selected


@dataclass
class DecisionTrace:
    y_base: float
    experts: dict[str, ExpertRead]
    y_combined: float

    def to_dict(self) -> dict:
        experts = {}
        for kind, read in self.experts.items():
            entry = {"c": read.confidence, "selected": read.selected}
            if read.selected:
                entry["y"] = read.logit
            experts[kind] = entry
        return {"y_base": self.y_base, "experts": experts, "y_combined": self.y_combined}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTrace":
        experts = {k: ExpertRead(confidence=v["c"], selected=v["selected"],
                                 logit=v.get("y"))
                   for k, v in data["experts"].items()}
        return cls(y_base=data["y_base"], experts=experts, y_combined=data["y_combined"])


@dataclass
class LesionPrediction:
    lesion_id: str
    n_views: int
    p_hat: float
    traces: list[DecisionTrace] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"lesion_id": self.lesion_id, "p_hat": self.p_hat,
                "views": [t.to_dict() for t in self.traces]}

    @classmethod
    def from_dict(cls, data: dict) -> "LesionPrediction":
        traces = [DecisionTrace.from_dict(v) for v in data["views"]]
        return cls(lesion_id=data["lesion_id"], n_views=len(traces),
                   p_hat=data["p_hat"], traces=traces)


def recompute_trace(trace: DecisionTrace, weights: dict[str, float]) -> float:
    """Re-derive the combined logit from the trace's recorded parts."""
    y = trace.y_base
    for kind, read in trace.experts.items():
        if read.selected:
            y += weights[kind] * read.logit
    return y


def recompute_lesion(pred: LesionPrediction) -> float:
    return _sigmoid(sum(t.y_combined for t in pred.traces) / len(pred.traces))


class EnsembleModel:
    """base + experts with per-expert thresholds t and aggregation weights w."""

    def __init__(self, base, experts: dict, thresholds: dict[str, float] | None = None,
                 weights: dict[str, float] | None = None):
        self.base = base
        self.experts = dict(experts)
        self.thresholds = dict(thresholds or DEFAULT_THRESHOLDS)
        self.weights = dict(weights or DEFAULT_WEIGHTS)
        for kind in self.experts:
            if kind not in EXPERT_KINDS:
                raise ValueError(f"unknown expert kind {kind!r}")
            if not 0 < self.thresholds[kind] < 1:
                raise ValueError(f"threshold for {kind} outside (0, 1)")
            if not math.isfinite(self.weights[kind]):
                raise ValueError(f"non-finite weight for {kind}")

    def predict_views(self, images: np.ndarray) -> list[DecisionTrace]:
        """Trace every view image: (N,1,H,W) -> N decision traces."""
        base_logits, _ = self.base.predict(images)
        reads: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for kind, expert in self.experts.items():
            logits, members = expert.predict(images)
            reads[kind] = (logits, members)
        traces = []
        for i in range(len(images)):
            y = float(base_logits[i])
            experts = {}
            combined = y
            for kind in self.experts:
                logits, members = reads[kind]
                c = float(members[i])
                selected = c > self.thresholds[kind]  # strict: c == t stays out
                logit = float(logits[i]) if selected else None
                experts[kind] = ExpertRead(confidence=c, selected=selected, logit=logit)
                if selected:
                    combined += self.weights[kind] * logit
            traces.append(DecisionTrace(y_base=y, experts=experts, y_combined=combined))
        return traces

    def predict_lesion(self, views: np.ndarray, lesion_id: str = "") -> LesionPrediction:
        """Aggregate N view logits: p = sigmoid(mean of combined logits)."""
        if len(views) == 0:
            raise ValueError("a lesion needs at least one view")
        traces = self.predict_views(views)
        mean_logit = sum(t.y_combined for t in traces) / len(traces)
        return LesionPrediction(lesion_id=lesion_id, n_views=len(traces),
                                p_hat=_sigmoid(mean_logit), traces=traces)

    def predict_manifest(self, manifest) -> list[LesionPrediction]:
        """One lesion per manifest row (single-view)."""
        images = manifest.load_images()
        traces = self.predict_views(images)
        return [LesionPrediction(lesion_id=row.id, n_views=1,
                                 p_hat=_sigmoid(t.y_combined), traces=[t])
                for row, t in zip(manifest.rows, traces)]


def save_predictions_jsonl(preds: list[LesionPrediction], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")


def load_predictions_jsonl(path: Path | str) -> list[LesionPrediction]:
    preds = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                preds.append(LesionPrediction.from_dict(json.loads(line)))
    return preds
