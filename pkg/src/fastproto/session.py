"""Interactive prototyping sessions as a persisted Markov state machine.

Each session appends immutable events to its own JSON-lines log; replaying
the log reconstructs the exact state, and a torn trailing line (crash
mid-write) is ignored, so a step is either fully persisted or absent.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .catalog import Catalog
from .constructs import DomainInterface, DslProgram, parse_program, serialize_program
from .errors import (
    FastprotoError,
    InvalidRank,
    SessionComplete,
    UnknownDomain,
    UnknownSession,
    UnknownStep,
)
from .knowledge import KnowledgeSource
from .metrics import StepRanking
from .translate import (
    compile_program,
    evaluate_csg,
    export_scene,
    ground_instruction,
    serialize_modeling,
)

DEFAULT_MAX_STEPS = 10
OUR_METHOD_ID = "ours"


@dataclass
class BaselineSlot:
    """External alternative translator: a subprocess speaking JSON on
    stdin/stdout, so human rankings can compare k > 1 candidates."""

    method_id: str
    argv: list[str]
    timeout_s: float = 20.0

    def run(self, instruction: str, program_json: str) -> dict:
        payload = json.dumps({"instruction": instruction, "program": program_json})
        try:
            proc = subprocess.run(
                self.argv,
                input=payload.encode(),
                capture_output=True,
                timeout=self.timeout_s,
                check=False,
            )
            if proc.returncode != 0:
                return {"error": f"exit {proc.returncode}: {proc.stderr.decode()[:200]}"}
            return json.loads(proc.stdout.decode())
        except (subprocess.TimeoutExpired, json.JSONDecodeError, OSError) as e:
            return {"error": str(e)}


@dataclass
class StepRecord:
    index: int
    instruction: str
    status: str  # "ok" | "failed"
    delta: Optional[dict] = None
    program: Optional[dict] = None  # parts/relationships snapshot (serialized)
    modeling: Optional[str] = None  # JSON-lines command listing
    scene: Optional[dict] = None
    stats: Optional[dict] = None
    candidates: dict[str, Any] = field(default_factory=dict)
    ranking: Optional[dict] = None
    error: Optional[dict] = None
    started_at: float = 0.0
    finished_at: float = 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "instruction": self.instruction,
            "status": self.status,
            "delta": self.delta,
            "program": self.program,
            "modeling": self.modeling,
            "scene": self.scene,
            "stats": self.stats,
            "candidates": self.candidates,
            "ranking": self.ranking,
            "error": self.error,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(**{k: d.get(k) for k in (
            "index", "instruction", "status", "delta", "program", "modeling",
            "scene", "stats", "candidates", "ranking", "error",
            "started_at", "finished_at",
        )})


@dataclass
class Session:
    session_id: str
    domain: str
    max_steps: int = DEFAULT_MAX_STEPS
    steps: list[StepRecord] = field(default_factory=list)
    current: DslProgram = field(default_factory=DslProgram)

    @property
    def status(self) -> str:
        return "COMPLETE" if len(self.steps) >= self.max_steps else "ACTIVE"

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "domain": self.domain,
            "max_steps": self.max_steps,
            "status": self.status,
            "steps": len(self.steps),
        }


def _step_seed(session_id: str, index: int) -> int:
    digest = hashlib.blake2b(f"{session_id}:{index}".encode(), digest_size=6).digest()
    return int.from_bytes(digest, "big")


class SessionService:
    """Session lifecycle over a directory of append-only event logs.

    One logical writer per session: step/rank calls on the same session
    serialize behind a per-session lock; reads only touch immutable
    records.
    """

    def __init__(
        self,
        data_dir: str | Path,
        interfaces: dict[str, DomainInterface],
        catalog: Catalog,
        ks: Optional[KnowledgeSource] = None,
        max_steps: int = DEFAULT_MAX_STEPS,
        eval_samples: int = 20000,
        baselines: Optional[list[BaselineSlot]] = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.interfaces = interfaces
        self.catalog = catalog
        self.ks = ks
        self.max_steps = max_steps
        self.eval_samples = eval_samples
        self.baselines = baselines or []
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._load_all()

    # -- persistence -------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.jsonl"

    def _index_path(self) -> Path:
        return self.data_dir / "index.json"

    def _append_event(self, session_id: str, event: dict):
        # key order is semantic (program declaration order); never sort
        line = json.dumps(event)
        with self._log_path(session_id).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _write_index(self):
        tmp = self._index_path().with_suffix(".tmp")
        doc = {sid: s.to_dict() for sid, s in self._sessions.items()}
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        tmp.replace(self._index_path())

    def _load_all(self):
        for path in sorted(self.data_dir.glob("*.jsonl")):
            session = self._replay(path)
            if session is not None:
                self._sessions[session.session_id] = session

    def _replay(self, path: Path) -> Optional[Session]:
        session: Optional[Session] = None
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                break  # torn tail write: everything after is discarded
            kind = event.get("event")
            if kind == "created":
                session = Session(
                    session_id=event["session_id"],
                    domain=event["domain"],
                    max_steps=event.get("max_steps", self.max_steps),
                )
            elif session is None:
                break
            elif kind == "step":
                record = StepRecord.from_dict(event["record"])
                session.steps.append(record)
                if record.status == "ok" and record.program is not None:
                    session.current = parse_program(json.dumps(record.program))
            elif kind == "ranking":
                idx = event["step"]
                for record in session.steps:
                    if record.index == idx:
                        record.ranking = event["ranking"]
        return session

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- service surface ------------------------------------------------------

    def domains(self) -> list[str]:
        return sorted(self.interfaces)

    def create_session(self, domain: str) -> str:
        iface = self.interfaces.get(domain)
        if iface is None or not iface.has_concepts():
            raise UnknownDomain(f"no adapted interface for domain {domain!r}")
        session_id = uuid.uuid4().hex[:12]
        session = Session(session_id=session_id, domain=domain, max_steps=self.max_steps)
        with self._registry_lock:
            self._sessions[session_id] = session
        self._append_event(
            session_id,
            {"event": "created", "session_id": session_id, "domain": domain,
             "max_steps": self.max_steps},
        )
        self._write_index()
        return session_id

    def _get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        return session

    def session(self, session_id: str) -> Session:
        return self._get(session_id)

    def step(self, session_id: str, instruction_text: str) -> StepRecord:
        with self._lock_for(session_id):
            session = self._get(session_id)
            if len(session.steps) >= session.max_steps:
                raise SessionComplete(
                    f"session {session_id} already ran {session.max_steps} steps"
                )
            iface = self.interfaces[session.domain]
            index = len(session.steps) + 1
            record = StepRecord(
                index=index,
                instruction=instruction_text,
                status="ok",
                started_at=time.time(),
            )
            try:
                delta = ground_instruction(
                    instruction_text, iface, session.current, ks=self.ks
                )
                new_program = session.current.apply_delta(delta.constructs)
                modeling = compile_program(new_program, self.catalog)
                stats = evaluate_csg(
                    modeling,
                    samples=self.eval_samples,
                    seed=_step_seed(session_id, index),
                )
                record.delta = delta.to_dict()
                record.program = json.loads(serialize_program(new_program))
                record.modeling = serialize_modeling(modeling)
                record.scene = export_scene(modeling)
                record.stats = stats.to_dict()
                record.candidates = {OUR_METHOD_ID: {"modeling": record.modeling}}
                for slot in self.baselines:
                    record.candidates[slot.method_id] = slot.run(
                        instruction_text, serialize_program(session.current)
                    )
            except FastprotoError as e:
                record.status = "failed"
                record.error = {"code": e.code, "message": str(e)}
                record.program = json.loads(serialize_program(session.current))
            record.finished_at = time.time()

            self._append_event(session_id, {"event": "step", "record": record.to_dict()})
            session.steps.append(record)
            if record.status == "ok":
                session.current = parse_program(json.dumps(record.program))
            self._write_index()
            return record

    def rank_step(self, session_id: str, step_index: int, ranking: StepRanking) -> dict:
        with self._lock_for(session_id):
            session = self._get(session_id)
            record = next((r for r in session.steps if r.index == step_index), None)
            if record is None:
                raise UnknownStep(f"session {session_id} has no step {step_index}")
            if ranking.step != step_index:
                raise InvalidRank(
                    f"ranking step {ranking.step} does not match URL step {step_index}"
                )
            record.ranking = ranking.to_dict()
            self._append_event(
                session_id,
                {"event": "ranking", "step": step_index, "ranking": ranking.to_dict()},
            )
            return {"ok": True, "step": step_index}

    def history(self, session_id: str) -> list[StepRecord]:
        return list(self._get(session_id).steps)

    def scene(self, session_id: str, step_index: int) -> dict:
        session = self._get(session_id)
        record = next((r for r in session.steps if r.index == step_index), None)
        if record is None or record.scene is None:
            raise UnknownStep(f"session {session_id} has no scene for step {step_index}")
        return record.scene

    def rankings(self, session_id: str) -> list[StepRanking]:
        out = []
        for record in self._get(session_id).steps:
            if record.ranking:
                out.append(StepRanking.from_dict(record.ranking))
        return out
