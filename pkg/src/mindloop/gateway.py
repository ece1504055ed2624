"""HTTP session service exposing the thinking loop.

JSON in and out; the imagined frame travels as a flat 784-array of reals in
[0,1], with a PGM convenience endpoint for anything that wants pixels.
Commands run synchronously (desk-scale inference is sub-second) and each
session accepts one command at a time: a second concurrent command gets 409
rather than queueing. Idle sessions are evicted after a TTL sweep on each
request.
"""

from __future__ import annotations

import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import CodecError
from .pfc import ModelBundle
from .render import pgm_bytes
from .thinking import MODES, SessionState, issue_command, new_session


class CreateSession(BaseModel):
    mode: str = "full"
    seed: int | None = None


class Command(BaseModel):
    text: str


@dataclass
class SessionRecord:
    session: SessionState
    created: float
    last_used: float
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(bundle: ModelBundle | None = None, bundle_path=None,
               session_ttl: float = 600.0) -> FastAPI:
    state = {"bundle": bundle}

    @asynccontextmanager
    async def _lifespan(app):
        if state["bundle"] is None and bundle_path is not None:
            loaded, _ = ModelBundle.load(bundle_path)
            state["bundle"] = loaded
        yield

    app = FastAPI(title="mindloop gateway", lifespan=_lifespan)
    sessions: dict[str, SessionRecord] = {}
    registry_lock = threading.Lock()
    app.state.sessions = sessions  # exposed for tests and diagnostics

    def _sweep():
        now = time.monotonic()
        with registry_lock:
            dead = [sid for sid, rec in sessions.items()
                    if now - rec.last_used > session_ttl]
            for sid in dead:
                del sessions[sid]

    def _ready() -> bool:
        b = state["bundle"]
        return b is not None and b.pfc is not None

    @app.get("/healthz")
    def healthz():
        if not _ready():
            return JSONResponse({"status": "loading"}, status_code=503)
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        _sweep()
        if not _ready():
            return JSONResponse({"detail": "model not loaded"}, status_code=503)
        if body.mode not in MODES:
            return JSONResponse({"detail": f"invalid mode {body.mode!r}"}, status_code=400)
        session = new_session(state["bundle"], mode=body.mode,
                              seed=body.seed if body.seed is not None else 0)
        sid = uuid.uuid4().hex
        now = time.monotonic()
        with registry_lock:
            sessions[sid] = SessionRecord(session=session, created=now, last_used=now)
        return {"id": sid, "mode": body.mode}

    def _get(sid: str) -> SessionRecord | None:
        _sweep()
        with registry_lock:
            return sessions.get(sid)

    @app.post("/sessions/{sid}/command")
    def run_command(sid: str, body: Command):
        rec = _get(sid)
        if rec is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        if not rec.lock.acquire(blocking=False):
            return JSONResponse({"detail": "command already in flight"}, status_code=409)
        try:
            result = issue_command(rec.session, body.text)
        except CodecError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=422)
        finally:
            rec.lock.release()
        rec.last_used = time.monotonic()
        return {
            "completion": result.completion,
            "image": [float(v) for v in result.image_after.reshape(-1)],
            "latents_dim": len(result.latents[0]),
        }

    @app.get("/sessions/{sid}")
    def session_summary(sid: str):
        rec = _get(sid)
        if rec is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        return {
            "id": sid,
            "mode": rec.session.mode,
            "transcript_len": len(rec.session.transcript),
            "created": rec.created,
            "last_used": rec.last_used,
        }

    @app.get("/sessions/{sid}/frame.pgm")
    def session_frame(sid: str):
        rec = _get(sid)
        if rec is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        img = rec.session.current_image()
        return Response(content=pgm_bytes(img), media_type="image/x-portable-graymap")

    return app
