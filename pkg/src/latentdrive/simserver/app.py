"""HTTP + WebSocket service around live simulation sessions."""

from __future__ import annotations

import asyncio
import base64
import binascii
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from latentdrive.simserver.session import ModelBundle, SessionError, SimSession, decode_png, png_bytes

QUEUE_DEPTH = 4


class CreateSessionRequest(BaseModel):
    checkpoint: str | None = None
    seed: int = 0
    init: str = "sample"
    init_frame_png: str | None = None
    eps_policy: str | None = None


class SessionEntry:
    def __init__(self, session: SimSession):
        self.session = session
        self.lock = asyncio.Lock()
        self.pending = 0


def create_app(
    codec_path: str | Path,
    engine_path: str | Path,
    default_eps_policy: str = "stochastic",
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="latentdrive simulation server")
    bundles: dict[str, ModelBundle] = {}
    default_bundle = ModelBundle.load(codec_path, engine_path)
    bundles["default"] = default_bundle
    sessions: dict[str, SessionEntry] = {}

    def resolve_bundle(name: str | None) -> ModelBundle:
        if name in (None, "", "default"):
            return bundles["default"]
        if name in bundles:
            return bundles[name]
        # interpret as "<codec path>::<engine path>"
        if "::" in name:
            codec_p, engine_p = name.split("::", 1)
            if Path(codec_p).exists() and Path(engine_p).exists():
                bundles[name] = ModelBundle.load(codec_p, engine_p)
                return bundles[name]
        raise SessionError("bad_checkpoint", f"unknown checkpoint {name!r}")

    @app.get("/v1/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions")
    async def create_session(request: CreateSessionRequest):
        try:
            bundle = resolve_bundle(request.checkpoint)
            init_frame = None
            if request.init == "from_frame":
                if not request.init_frame_png:
                    raise SessionError("bad_init", "from_frame init requires init_frame_png")
                try:
                    init_frame = decode_png(base64.b64decode(request.init_frame_png))
                except (binascii.Error, OSError) as exc:
                    raise SessionError("bad_init", f"undecodable init frame: {exc}") from exc
            session = SimSession(
                bundle,
                seed=request.seed,
                eps_policy=request.eps_policy or default_eps_policy,
                init=request.init,
                init_frame=init_frame,
            )
        except SessionError as exc:
            return JSONResponse(status_code=400, content={"code": exc.code, "msg": str(exc)})
        sessions[session.session_id] = SessionEntry(session)
        return {"session_id": session.session_id}

    def frame_reply(session: SimSession, frame) -> dict:
        return {
            "type": "frame",
            "t": session.step_count,
            "png": base64.b64encode(png_bytes(frame)).decode(),
        }

    def handle_message(session: SimSession, message: dict) -> dict:
        kind = message.get("type")
        if kind == "step":
            action = message.get("action")
            if (
                not isinstance(action, (list, tuple))
                or len(action) != 2
                or not all(isinstance(v, (int, float)) for v in action)
            ):
                raise SessionError("bad_action", "step needs action: [speed, angular_velocity]")
            frame = session.step(float(action[0]), float(action[1]))
            return frame_reply(session, frame)
        if kind == "edit":
            edit_kind = message.get("kind")
            if edit_kind == "content":
                cell = message.get("cell")
                if (
                    not isinstance(cell, (list, tuple))
                    or len(cell) != 2
                    or not all(isinstance(v, int) for v in cell)
                ):
                    raise SessionError("bad_edit", "content edit needs cell: [i, j]")
                frame = session.edit("content", (cell[0], cell[1]))
            elif edit_kind in ("theme", "aindep"):
                frame = session.edit(edit_kind)
            else:
                raise SessionError("bad_edit", f"unknown edit kind {edit_kind!r}")
            return frame_reply(session, frame)
        if kind == "snapshot":
            return {
                "type": "snapshot",
                "blob": base64.b64encode(session.snapshot()).decode(),
            }
        if kind == "restore":
            blob = message.get("blob")
            if not isinstance(blob, str):
                raise SessionError("bad_snapshot", "restore needs a base64 blob")
            try:
                raw = base64.b64decode(blob)
            except binascii.Error as exc:
                raise SessionError("bad_snapshot", f"invalid base64: {exc}") from exc
            frame = session.restore(raw)
            return frame_reply(session, frame)
        if kind == "reset":
            frame = session.reset()
            return frame_reply(session, frame)
        raise SessionError("bad_message", f"unknown message type {kind!r}")

    @app.websocket("/v1/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        entry = sessions.get(session_id)
        if entry is None:
            await websocket.send_json(
                {"type": "error", "code": "no_session", "msg": f"unknown session {session_id}"}
            )
            await websocket.close()
            return
        # first frame so clients can render before the first step
        async with entry.lock:
            await websocket.send_json(frame_reply(entry.session, entry.session.current_frame()))
        try:
            while True:
                try:
                    message = await websocket.receive_json()
                except ValueError:
                    await websocket.send_json(
                        {"type": "error", "code": "bad_json", "msg": "message is not valid JSON"}
                    )
                    continue
                if entry.pending >= QUEUE_DEPTH:
                    await websocket.send_json(
                        {
                            "type": "error",
                            "code": "queue_overflow",
                            "msg": f"more than {QUEUE_DEPTH} commands in flight",
                        }
                    )
                    continue
                entry.pending += 1
                try:
                    async with entry.lock:
                        reply = handle_message(entry.session, message)
                except SessionError as exc:
                    reply = {"type": "error", "code": exc.code, "msg": str(exc)}
                finally:
                    entry.pending -= 1
                await websocket.send_json(reply)
        except WebSocketDisconnect:
            return

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
