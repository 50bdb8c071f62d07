"""Reader-study state: sessions with seeded case order and append-only
reads, persisted as one JSON-lines event log per session."""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BIRADS_SCORES = ("2", "3", "4A", "4B", "4C", "5")
MALIGNANT_READS = frozenset({"4A", "4B", "4C", "5"})


class StudyError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


@dataclass
class Read:
    case_id: str
    stage: int
    birads: str
    timestamp: float


@dataclass
class Session:
    session_id: str
    reader_id: str
    seed: int
    order: list[str]
    reads: dict = field(default_factory=dict)  # (case_id, stage) -> Read

    def reads_for_stage(self, stage: int) -> dict[str, Read]:
        return {cid: r for (cid, s), r in self.reads.items() if s == stage}

    def next_case(self, stage: int) -> str | None:
        done = self.reads_for_stage(stage)
        for case_id in self.order:
            if case_id not in done:
                return case_id
        return None

    def position(self, stage: int) -> int:
        return len(self.reads_for_stage(stage))


class StudyStore:
    def __init__(self, state_dir: Path | str, case_ids: list[str]):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.case_ids = list(case_ids)
        self.sessions: dict[str, Session] = {}
        self._replay()

    # -- persistence --------------------------------------------------------
    def _log_path(self, session_id: str) -> Path:
        return self.state_dir / f"session-{session_id}.jsonl"

    def _append(self, session_id: str, event: dict) -> None:
        with open(self._log_path(session_id), "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay(self) -> None:
        for path in sorted(self.state_dir.glob("session-*.jsonl")):
            session: Session | None = None
            with open(path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    if event["type"] == "created":
                        session = Session(session_id=event["session_id"],
                                          reader_id=event["reader_id"],
                                          seed=event["seed"], order=event["order"])
                    elif event["type"] == "read" and session is not None:
                        read = Read(case_id=event["case_id"], stage=event["stage"],
                                    birads=event["birads"], timestamp=event["ts"])
                        session.reads[(read.case_id, read.stage)] = read
            if session is not None:
                self.sessions[session.session_id] = session

    # -- operations ----------------------------------------------------------
    def create_session(self, reader_id: str, seed: int,
                       case_ids: list[str] | None = None) -> Session:
        ids = list(case_ids) if case_ids else list(self.case_ids)
        if not ids:
            raise StudyError(422, "case manifest is empty")
        unknown = [c for c in ids if c not in self.case_ids]
        if unknown:
            raise StudyError(422, f"unknown case ids: {unknown[:5]}")
        order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
        session = Session(session_id=uuid.uuid4().hex[:12], reader_id=reader_id,
                          seed=seed, order=order)
        self.sessions[session.session_id] = session
        self._append(session.session_id,
                     {"type": "created", "session_id": session.session_id,
                      "reader_id": reader_id, "seed": seed, "order": order,
                      "ts": time.time()})
        return session

    def get(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise StudyError(404, f"unknown session {session_id}")
        return self.sessions[session_id]

    def next_case(self, session_id: str, stage: int) -> str | None:
        session = self.get(session_id)
        if stage not in (1, 2):
            raise StudyError(422, f"stage must be 1 or 2, got {stage}")
        case_id = session.next_case(stage)
        if case_id is None:
            return None
        if stage == 2 and (case_id, 1) not in session.reads:
            raise StudyError(409, f"case {case_id} has no stage-1 read yet; "
                                  "stage 2 unlocks per case after stage 1")
        return case_id

    def record_read(self, session_id: str, case_id: str, stage: int, birads: str) -> Read:
        session = self.get(session_id)
        if stage not in (1, 2):
            raise StudyError(422, f"stage must be 1 or 2, got {stage}")
        if birads not in BIRADS_SCORES:
            raise StudyError(422, f"invalid BI-RADS score {birads!r}; "
                                  f"expected one of {list(BIRADS_SCORES)}")
        if case_id not in session.order:
            raise StudyError(404, f"case {case_id} not in this session")
        if (case_id, stage) in session.reads:
            raise StudyError(409, f"case {case_id} already read at stage {stage}")
        expected = session.next_case(stage)
        if case_id != expected:
            raise StudyError(409, f"case {case_id} is not the next stage-{stage} case "
                                  f"(expected {expected})")
        if stage == 2 and (case_id, 1) not in session.reads:
            raise StudyError(409, f"case {case_id} needs its stage-1 read first")
        read = Read(case_id=case_id, stage=stage, birads=birads, timestamp=time.time())
        session.reads[(case_id, stage)] = read
        self._append(session_id, {"type": "read", "case_id": case_id, "stage": stage,
                                  "birads": birads, "ts": read.timestamp})
        return read
