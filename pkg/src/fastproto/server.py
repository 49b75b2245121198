"""HTTP API over the session service, consumed by the CLI and studio UI."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import (
    FastprotoError,
    InvalidRank,
    SessionComplete,
    UnknownDomain,
    UnknownSession,
    UnknownStep,
)
from .metrics import StepRanking
from .session import SessionService

_STATUS_BY_ERROR = {
    UnknownDomain: 404,
    UnknownSession: 404,
    UnknownStep: 404,
    SessionComplete: 409,
    InvalidRank: 400,
}


class CreateSessionBody(BaseModel):
    domain: str


class StepBody(BaseModel):
    instruction: str


class RankingBody(BaseModel):
    ranks: dict[str, int]
    k: int | None = None
    partial: bool = False


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="fastproto session service", version="1")
    # the studio UI is served from its own origin during development
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(FastprotoError)
    async def _domain_error(_req: Request, exc: FastprotoError):
        status = 400
        for etype, code in _STATUS_BY_ERROR.items():
            if isinstance(exc, etype):
                status = code
                break
        return JSONResponse(
            status_code=status, content={"code": exc.code, "message": str(exc)}
        )

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.get("/v1/domains")
    def domains():
        return {"domains": service.domains()}

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionBody):
        session_id = service.create_session(body.domain)
        session = service.session(session_id)
        return {"session_id": session_id, "max_steps": session.max_steps}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return service.session(session_id).to_dict()

    @app.post("/v1/sessions/{session_id}/steps")
    def step(session_id: str, body: StepBody):
        record = service.step(session_id, body.instruction)
        return record.to_dict()

    @app.post("/v1/sessions/{session_id}/steps/{step_index}/ranking")
    def rank(session_id: str, step_index: int, body: RankingBody):
        session = service.session(session_id)
        record = next((r for r in session.steps if r.index == step_index), None)
        if record is None:
            raise UnknownStep(f"session {session_id} has no step {step_index}")
        k = body.k if body.k is not None else max(2, len(record.candidates))
        ranking = StepRanking(step=step_index, ranks=body.ranks, k=k, partial=body.partial)
        return service.rank_step(session_id, step_index, ranking)

    @app.get("/v1/sessions/{session_id}/history")
    def history(session_id: str):
        return {
            "session": service.session(session_id).to_dict(),
            "steps": [r.to_dict() for r in service.history(session_id)],
        }

    @app.get("/v1/sessions/{session_id}/scene/{step_index}")
    def scene(session_id: str, step_index: int):
        return service.scene(session_id, step_index)

    return app
