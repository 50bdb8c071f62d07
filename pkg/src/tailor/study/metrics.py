"""Reader metrics: BI-RADS reads binarized at the 4A threshold, sensitivity
and specificity per stage, and stage-2 minus stage-1 deltas."""

from __future__ import annotations

import numpy as np

from ..stats import ScoredSet, sens_spec
from .store import MALIGNANT_READS, Session


def stage_metrics(session: Session, gold: dict[str, int], stage: int) -> dict | None:
    reads = session.reads_for_stage(stage)
    if not reads:
        return None
    case_ids = [c for c in session.order if c in reads]
    scores = np.array([1.0 if reads[c].birads in MALIGNANT_READS else 0.0
                       for c in case_ids])
    labels = np.array([gold[c] for c in case_ids])
    sens, spec = sens_spec(ScoredSet(scores=scores, labels=labels), threshold=0.5)
    return {"stage": stage, "n_reads": len(case_ids),
            "sensitivity": sens, "specificity": spec}


def session_metrics(session: Session, gold: dict[str, int]) -> dict:
    out: dict = {"session_id": session.session_id, "reader_id": session.reader_id,
                 "total_cases": len(session.order)}
    s1 = stage_metrics(session, gold, 1)
    s2 = stage_metrics(session, gold, 2)
    if s1 is None and s2 is None:
        out["error"] = "no completed reads"
        return out
    if s1:
        out["stage1"] = s1
    if s2:
        out["stage2"] = s2
    if s1 and s2:
        delta = {}
        for key in ("sensitivity", "specificity"):
            if s1[key] is not None and s2[key] is not None:
                delta[key] = s2[key] - s1[key]
            else:
                delta[key] = None
        out["delta"] = delta
    return out
