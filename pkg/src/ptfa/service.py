"""Network-facing layer: REST session management plus the live WebSocket.

One process hosts many sessions. Each live session gets a ticker thread
driving the facilitation loop against the wall clock; WebSocket handlers
subscribe to the room and relay its envelope stream. All mutation funnels
through the room lock, so every client observes the same total order.

Admin authentication: POST /sessions requires the x-admin-token header to
match the PTFA_ADMIN_TOKEN environment variable. Tokens never appear in
stored records or broadcast envelopes.
"""

from __future__ import annotations

import asyncio
import logging
import os
import secrets
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .config import AppConfig, default_config
from .engine import default_baseline_schedule
from .gateway import Provider
from .model import ClockRegression, FacilitationModel, PtfaError, Session
from .protocol import (
    BadEnvelope,
    encode,
    error_envelope,
    joined_envelope,
    parse_client_envelope,
    survey_ack_envelope,
)
from .room import NotLive, RoomStatus, SessionRoom
from .scheduler import SystemClock, run_session
from .storage import (
    DuplicateResponse,
    SessionNotClosed,
    SessionStore,
    StorageUnavailable,
    UnknownSession,
)

ADMIN_TOKEN_ENV = "PTFA_ADMIN_TOKEN"

log = logging.getLogger("ptfa.service")


class InvalidTopic(PtfaError):
    code = "invalid_topic"


class InvalidGroupSize(PtfaError):
    code = "invalid_group_size"


class InvalidModel(PtfaError):
    code = "invalid_model"


class TokenInvalid(PtfaError):
    code = "token_invalid"


class TokenReused(PtfaError):
    code = "token_reused"


def error_code(exc: Exception) -> str:
    if isinstance(exc, PtfaError):
        return exc.code
    if isinstance(exc, SessionNotClosed):
        return "session_not_closed"
    if isinstance(exc, DuplicateResponse):
        return "duplicate_response"
    if isinstance(exc, StorageUnavailable):
        return "storage_unavailable"
    if isinstance(exc, UnknownSession):
        return "unknown_session"
    return "internal"


@dataclass
class RoomRuntime:
    room: SessionRoom
    tokens: dict[str, str | None]  # token -> participant_id once used
    clock: SystemClock | None = None
    ticker: threading.Thread | None = None
    connected: set[str] = field(default_factory=set)


class ServiceManager:
    """Owns all rooms, token books, and ticker threads of one process."""

    def __init__(self, cfg: AppConfig, store: SessionStore):
        self.cfg = cfg
        self.store = store
        self.rooms: dict[str, RoomRuntime] = {}
        self._lock = threading.Lock()
        self._provider: Provider | None = None

    def provider(self) -> Provider:
        with self._lock:
            if self._provider is None:
                self._provider = self.cfg.provider.build()
            return self._provider

    # -- REST ------------------------------------------------------------------

    def create_session(self, topic_id: int, model: str, group_size: int) -> dict[str, Any]:
        if topic_id not in self.cfg.topics:
            raise InvalidTopic(f"unknown topic {topic_id}")
        try:
            parsed_model = FacilitationModel(model)
        except ValueError:
            raise InvalidTopic(f"unknown facilitation model {model!r}") from None
        if not isinstance(group_size, int) or group_size < 2:
            raise InvalidGroupSize(f"group_size must be an integer >= 2, got {group_size!r}")
        if parsed_model is FacilitationModel.MODEL0:
            try:
                default_baseline_schedule().validate_for(self.cfg.scheduler.session_duration_ms)
            except ValueError as exc:
                raise InvalidModel(str(exc)) from None
        session_id = uuid.uuid4().hex[:12]
        session = Session(
            session_id=session_id,
            topic=self.cfg.topics[topic_id],
            model=parsed_model,
            group_size=group_size,
            duration_ms=self.cfg.scheduler.session_duration_ms,
            phase_boundary_ms=self.cfg.scheduler.phase_boundary_ms,
        )
        self.store.create_session(session_id, topic_id, parsed_model.value, group_size)
        room = SessionRoom(session, self.cfg.scheduler, self.store)
        tokens = [secrets.token_urlsafe(16) for _ in range(group_size)]
        with self._lock:
            self.rooms[session_id] = RoomRuntime(
                room=room, tokens={token: None for token in tokens}
            )
        return {
            "session_id": session_id,
            "tokens": tokens,
            "topic": session.topic.prompt_text,
            "duration_ms": session.duration_ms,
        }

    def export_dataset(self, session_id: str) -> bytes:
        return self.store.export_dataset(session_id)

    def export_surveys(self, session_id: str) -> bytes:
        return self.store.export_surveys(session_id)

    # -- joining ---------------------------------------------------------------

    def join(self, session_id: str, token: str) -> tuple[RoomRuntime, str]:
        with self._lock:
            runtime = self.rooms.get(session_id)
        if runtime is None:
            raise TokenInvalid("unknown session or token")
        with runtime.room.lock:
            if token not in runtime.tokens:
                raise TokenInvalid("unknown session or token")
            participant_id = runtime.tokens[token]
            if participant_id is None:
                participant_id = runtime.room.add_participant()
                runtime.tokens[token] = participant_id
                if runtime.room.is_full and runtime.room.status is RoomStatus.PENDING:
                    self._start(runtime)
            elif participant_id in runtime.connected:
                raise TokenReused(f"{participant_id} is already connected")
            runtime.connected.add(participant_id)
            return runtime, participant_id

    def leave(self, runtime: RoomRuntime, participant_id: str) -> None:
        with runtime.room.lock:
            runtime.connected.discard(participant_id)

    def _start(self, runtime: RoomRuntime) -> None:
        clock = SystemClock()
        runtime.clock = clock
        runtime.room.start(clock.now_ms())
        provider = (
            self.provider()
            if runtime.room.session.model is FacilitationModel.MODEL1
            else None
        )
        ticker = threading.Thread(
            target=self._run_ticker,
            args=(runtime, provider, clock),
            name=f"ticker-{runtime.room.session.session_id}",
            daemon=True,
        )
        runtime.ticker = ticker
        ticker.start()

    def _run_ticker(self, runtime: RoomRuntime, provider: Provider | None, clock: SystemClock) -> None:
        session_id = runtime.room.session.session_id
        try:
            for report in run_session(runtime.room, provider, clock, registry=self.cfg.hats):
                log.info("session %s tick %s", session_id, report.to_json_line())
        except ClockRegression as exc:
            log.error("session %s aborted: %s", session_id, exc)
            with runtime.room.lock:
                runtime.room.end(clock.now_ms())
        except Exception:
            log.exception("session %s ticker crashed", session_id)

    def shutdown(self) -> None:
        self.store.close()


def create_app(cfg: AppConfig | None = None, store: SessionStore | None = None) -> FastAPI:
    cfg = cfg or default_config()
    store = store or SessionStore(cfg.service.data_dir)
    recovered = store.recover()
    for session_id in recovered:
        log.warning("session %s was live at shutdown; closed for export", session_id)
    manager = ServiceManager(cfg, store)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        manager.shutdown()

    app = FastAPI(title="ptfa", lifespan=lifespan)
    app.state.manager = manager

    def fail(status: int, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=status,
            content={"error": {"code": error_code(exc), "message": str(exc)}},
        )

    @app.get("/healthz")
    async def healthz() -> dict[str, Any]:
        return {"status": "ok", "sessions": len(manager.rooms)}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        expected = os.environ.get(ADMIN_TOKEN_ENV)
        if not expected:
            return fail(503, StorageUnavailable("admin token not configured"))
        if not secrets.compare_digest(request.headers.get("x-admin-token", ""), expected):
            return fail(403, TokenInvalid("bad admin token"))
        try:
            body = await request.json()
        except ValueError:
            return fail(400, BadEnvelope("body must be JSON"))
        if not isinstance(body, dict):
            return fail(400, BadEnvelope("body must be a JSON object"))
        try:
            created = manager.create_session(
                topic_id=body.get("topic_id", 0),
                model=str(body.get("model", "1")),
                group_size=body.get("group_size", 3),
            )
        except (InvalidTopic, InvalidGroupSize, InvalidModel) as exc:
            return fail(400, exc)
        return JSONResponse(status_code=201, content=created)

    @app.get("/sessions/{session_id}/export")
    async def export_dataset(session_id: str):
        try:
            data = manager.export_dataset(session_id)
        except UnknownSession as exc:
            return fail(404, exc)
        except SessionNotClosed as exc:
            return fail(409, exc)
        return Response(content=data, media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/survey")
    async def export_surveys(session_id: str):
        try:
            data = manager.export_surveys(session_id)
        except UnknownSession as exc:
            return fail(404, exc)
        except SessionNotClosed as exc:
            return fail(409, exc)
        return Response(content=data, media_type="application/x-ndjson")

    @app.websocket("/ws")
    async def live_channel(ws: WebSocket) -> None:
        await ws.accept()
        # Handshake: the first frame must join a session.
        try:
            raw = await ws.receive_text()
        except WebSocketDisconnect:
            return
        try:
            payload = parse_client_envelope(raw)
            if payload["type"] != "join":
                raise BadEnvelope("first frame must be a join")
            runtime, participant_id = await run_in_threadpool(
                manager.join, payload["session_id"], payload["token"]
            )
        except (PtfaError, StorageUnavailable) as exc:
            await ws.send_text(encode(error_envelope(error_code(exc), str(exc))))
            await ws.close()
            return

        room = runtime.room
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue[dict[str, Any]] = asyncio.Queue()

        def deliver(envelope: dict[str, Any]) -> None:
            loop.call_soon_threadsafe(queue.put_nowait, envelope)

        history, handle = room.subscribe(deliver)
        try:
            await ws.send_text(
                encode(
                    joined_envelope(
                        participant_id, room.session.topic, room.session.duration_ms
                    )
                )
            )
            for envelope in history:
                await ws.send_text(encode(envelope))

            async def pump() -> None:
                while True:
                    envelope = await queue.get()
                    await ws.send_text(encode(envelope))

            pump_task = asyncio.create_task(pump())
            try:
                while True:
                    raw = await ws.receive_text()
                    try:
                        payload = parse_client_envelope(raw)
                        if payload["type"] == "post":
                            if runtime.clock is None:
                                raise NotLive("session has not started")
                            clock = runtime.clock
                            text = payload["text"]

                            def timed_post() -> None:
                                # Clock must be read under the room lock:
                                # otherwise two concurrent posts can append
                                # in the opposite order of their timestamps.
                                with room.lock:
                                    room.submit_post(participant_id, text, clock.now_ms())

                            await run_in_threadpool(timed_post)
                        elif payload["type"] == "survey":
                            answers = payload["answers"]
                            await run_in_threadpool(
                                room.submit_survey,
                                participant_id,
                                answers[0],
                                answers[1],
                                answers[2],
                            )
                            await ws.send_text(encode(survey_ack_envelope()))
                        else:
                            raise BadEnvelope("already joined")
                    except (
                        PtfaError,
                        SessionNotClosed,
                        DuplicateResponse,
                        StorageUnavailable,
                    ) as exc:
                        await ws.send_text(encode(error_envelope(error_code(exc), str(exc))))
            finally:
                pump_task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            room.unsubscribe(handle)
            manager.leave(runtime, participant_id)

    return app
