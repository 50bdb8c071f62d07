"""HTTP service for the two-stage reader study.

Stage-1 responses never contain AI or auxiliary fields; the AI panel data
(prediction plus decision trace) unlocks per case once its stage-1 read
is recorded.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from ..diagnosis import load_predictions_jsonl
from ..manifest import DatasetManifest
from .metrics import session_metrics
from .store import StudyError, StudyStore


class SessionRequest(BaseModel):
    reader_id: str
    seed: int = 0
    case_ids: list[str] | None = None


class ReadRequest(BaseModel):
    case_id: str
    stage: int
    birads: str


def create_app(cases_csv: str | Path, predictions_jsonl: str | Path,
               gold_csv: str | Path, state_dir: str | Path = "study_state",
               static_dir: str | Path | None = None) -> FastAPI:
    cases = DatasetManifest.load(cases_csv)
    case_rows = {r.id: r for r in cases.rows}
    gold = {r.id: r.label for r in DatasetManifest.load(gold_csv).rows}
    predictions = {p.lesion_id: p for p in load_predictions_jsonl(predictions_jsonl)}
    missing_gold = [c for c in case_rows if c not in gold]
    if missing_gold:
        raise ValueError(f"cases without gold labels: {missing_gold[:5]}")
    store = StudyStore(state_dir, list(case_rows))

    app = FastAPI(title="reader-study")

    @app.exception_handler(StudyError)
    async def study_error_handler(_request: Request, exc: StudyError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        session = store.create_session(req.reader_id, req.seed, req.case_ids)
        return {"session_id": session.session_id, "order": session.order,
                "total": len(session.order)}

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str):
        session = store.get(session_id)
        return {"session_id": session.session_id, "reader_id": session.reader_id,
                "total": len(session.order),
                "stage1_done": session.position(1), "stage2_done": session.position(2)}

    @app.get("/sessions/{session_id}/next")
    def next_case(session_id: str, stage: int = Query(...)):
        session = store.get(session_id)
        case_id = store.next_case(session_id, stage)
        if case_id is None:
            return {"done": True, "stage": stage, "total": len(session.order)}
        packet = {"case_id": case_id, "stage": stage,
                  "index": session.position(stage), "total": len(session.order),
                  "image_url": f"/cases/{case_id}/image"}
        if stage == 2:
            row = case_rows[case_id]
            packet["aux"] = {"device": row.device,
                             "lesion_area": list(row.bbox),
                             "note": "auxiliary context (demographics stand-in)"}
            pred = predictions.get(case_id)
            if pred is not None:
                packet["ai"] = pred.to_dict()
        return packet

    @app.post("/sessions/{session_id}/reads", status_code=201)
    def record_read(session_id: str, req: ReadRequest):
        read = store.record_read(session_id, req.case_id, req.stage, req.birads)
        return {"accepted": True, "case_id": read.case_id, "stage": read.stage,
                "birads": read.birads}

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        session = store.get(session_id)
        return session_metrics(session, gold)

    @app.get("/cases/{case_id}/image")
    def case_image(case_id: str):
        if case_id not in case_rows:
            raise StudyError(404, f"unknown case {case_id}")
        return FileResponse(cases.image_path(case_rows[case_id]), media_type="image/png")

    @app.get("/cases/{case_id}/ai")
    def case_ai(case_id: str, session: str = Query(...)):
        sess = store.get(session)
        if case_id not in case_rows:
            raise StudyError(404, f"unknown case {case_id}")
        if (case_id, 1) not in sess.reads:
            raise StudyError(409, "AI output unlocks after the stage-1 read")
        pred = predictions.get(case_id)
        if pred is None:
            raise StudyError(404, f"no prediction stored for case {case_id}")
        return pred.to_dict()

    if static_dir is not None and Path(static_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
