"""Multi-channel gateway: versioned JSON wire protocol, device groups with
synchronized broadcast, capability-aware rendering, REST + WebSocket
endpoints, and the static chat bundle.

Every outbound bot_response frame carries a canonical flattened ``text``
plus a payload rendered for the receiving channel, so all members of a
device group see the same sequence even when their modalities differ.
"""

from __future__ import annotations

import asyncio
import json
import logging
import secrets
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from starlette.staticfiles import StaticFiles
from starlette.websockets import WebSocket, WebSocketDisconnect

from .assistant import Assistant, CapacityError, UnknownSessionError
from .dialogue import Session
from .profiles import ProfileError
from .responses import (
    ChannelDescriptor,
    Payload,
    QuickReplies,
    Response,
    Text,
    flatten,
    make_channel,
    payload_to_wire,
)

logger = logging.getLogger(__name__)

__all__ = [
    "PROTOCOL_VERSION",
    "ERR_MALFORMED",
    "ERR_VERSION",
    "ERR_UNKNOWN_TYPE",
    "ERR_UNKNOWN_SESSION",
    "ERR_UNKNOWN_GROUP",
    "ERR_GROUP_FULL",
    "ERR_CAPACITY",
    "ERR_SEQ_ORDER",
    "ERR_NOT_ALLOWED",
    "ERR_CONSENT_STATE",
    "render_for_channel",
    "ClientConnection",
    "Gateway",
    "create_app",
]

PROTOCOL_VERSION = 1

ERR_MALFORMED = "MALFORMED"
ERR_VERSION = "VERSION"
ERR_UNKNOWN_TYPE = "UNKNOWN_TYPE"
ERR_UNKNOWN_SESSION = "UNKNOWN_SESSION"
ERR_UNKNOWN_GROUP = "UNKNOWN_GROUP"
ERR_GROUP_FULL = "GROUP_FULL"
ERR_CAPACITY = "CAPACITY"
ERR_SEQ_ORDER = "SEQ_ORDER"
ERR_NOT_ALLOWED = "NOT_ALLOWED"
ERR_CONSENT_STATE = "CONSENT_STATE"

_KNOWN_TYPES = {
    "hello",
    "session_open",
    "session_join",
    "user_utterance",
    "bot_response",
    "identify",
    "consent",
    "error",
    "ping",
    "pong",
}

# Frame types that participate in per-session seq ordering.
_SEQUENCED_INBOUND = {"user_utterance", "identify", "consent"}


def render_for_channel(payload: Payload, caps: ChannelDescriptor) -> Payload:
    """Adapt one payload to a channel's capabilities.

    Display-only channels get cards and text but never quick replies;
    channels without rich cards get the deterministic text flattening.
    """
    if isinstance(payload, QuickReplies) and caps.display_only:
        return Text(payload.prompt)
    if not caps.rich_cards and not isinstance(payload, Text):
        return Text(flatten(payload))
    return payload


@dataclass
class ClientConnection:
    """One live client socket (or its test double)."""

    send: Callable[[dict], None]
    conn_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    channel: ChannelDescriptor | None = None
    session_id: str | None = None
    group_token: str | None = None


@dataclass
class _GroupState:
    token: str
    session_id: str
    members: dict[str, ClientConnection] = field(default_factory=dict)

    def count_kind(self, kind: str) -> int:
        return sum(1 for c in self.members.values() if c.channel and c.channel.kind == kind)

    def has_rich_display(self) -> bool:
        return any(c.channel and c.channel.rich_cards for c in self.members.values())


@dataclass
class _SessionWire:
    out_seq: int = 0
    in_seq: int = 0
    # (seq, turn, Response) of the latest broadcast batch, for replay-on-join
    last_batch: list[tuple[int, int, Response]] = field(default_factory=list)


class Gateway:
    """Transport-agnostic protocol core shared by the REST and WS endpoints."""

    def __init__(self, assistant: Assistant):
        self.assistant = assistant
        self._lock = threading.Lock()
        self._groups: dict[str, _GroupState] = {}
        self._group_by_session: dict[str, str] = {}
        self._wire: dict[str, _SessionWire] = {}

    # ------------------------------------------------------------------
    # session/group lifecycle

    def open_session(self, channel: ChannelDescriptor) -> tuple[Session, str]:
        session = self.assistant.open_session(channel)
        token = secrets.token_urlsafe(12)
        with self._lock:
            self._groups[token] = _GroupState(token=token, session_id=session.session_id)
            self._group_by_session[session.session_id] = token
            self._wire[session.session_id] = _SessionWire()
        return session, token

    def join_group(self, token: str, conn: ClientConnection) -> str:
        with self._lock:
            group = self._groups.get(token)
            if group is None:
                raise KeyError(token)
            kind = conn.channel.kind if conn.channel else "webchat"
            if kind in ("robot", "screen") and group.count_kind(kind) >= 1:
                raise ValueError(f"group already has a {kind} member")
            group.members[conn.conn_id] = conn
            conn.session_id = group.session_id
            conn.group_token = token
            return group.session_id

    def leave(self, conn: ClientConnection) -> None:
        with self._lock:
            if conn.group_token and conn.group_token in self._groups:
                self._groups[conn.group_token].members.pop(conn.conn_id, None)

    def group_has_rich_display(self, token: str) -> bool:
        with self._lock:
            group = self._groups.get(token)
            return bool(group and group.has_rich_display())

    def wire_state(self, session_id: str) -> _SessionWire:
        with self._lock:
            state = self._wire.get(session_id)
            if state is None:
                state = _SessionWire()
                self._wire[session_id] = state
            return state

    # ------------------------------------------------------------------
    # broadcasting

    def _bot_frame(
        self, session_id: str, seq: int, turn: int, response: Response,
        caps: ChannelDescriptor,
    ) -> dict:
        rendered = render_for_channel(response.payload, caps)
        return {
            "v": PROTOCOL_VERSION,
            "type": "bot_response",
            "session": session_id,
            "seq": seq,
            "payload": {
                "turn": turn,
                "text": response.text,
                "template": response.template_id,
                "skill": response.skill,
                "payload": payload_to_wire(rendered),
            },
        }

    def dispatch_responses(
        self, session: Session, responses: list[Response]
    ) -> list[tuple[int, int, Response]]:
        """Assign seq numbers, remember the batch for replay, broadcast."""
        state = self.wire_state(session.session_id)
        batch: list[tuple[int, int, Response]] = []
        for response in responses:
            state.out_seq += 1
            batch.append((state.out_seq, session.turn_count, response))
        state.last_batch = batch

        token = self._group_by_session.get(session.session_id)
        members = []
        if token is not None:
            with self._lock:
                members = list(self._groups[token].members.values())
        for seq, turn, response in batch:
            for member in members:
                caps = member.channel or session.channel
                try:
                    member.send(
                        self._bot_frame(session.session_id, seq, turn, response, caps)
                    )
                except Exception:
                    logger.exception("broadcast to %s failed", member.conn_id)
        return batch

    def replay_last_batch(self, conn: ClientConnection) -> None:
        """Send the current turn's responses to a late joiner, original seqs."""
        if conn.session_id is None:
            return
        state = self.wire_state(conn.session_id)
        for seq, turn, response in state.last_batch:
            caps = conn.channel or make_channel("webchat")
            conn.send(self._bot_frame(conn.session_id, seq, turn, response, caps))

    # ------------------------------------------------------------------
    # REST entry point

    def rest_message(
        self, session_id: str | None, text: str, now: datetime | None = None
    ) -> dict:
        """Handle one REST turn, opening a session when none is given."""
        token = None
        if session_id is None:
            session, token = self.open_session(make_channel("rest"))
        else:
            session = self.assistant.get_session(session_id)
            token = self._group_by_session.get(session.session_id)
        responses = self.assistant.handle_text(session.session_id, text, now)
        batch = self.dispatch_responses(session, responses)
        rest_caps = make_channel("rest")
        return {
            "session": session.session_id,
            "group": token,
            "turn": session.turn_count,
            "responses": [
                {
                    "seq": seq,
                    "text": response.text,
                    "template": response.template_id,
                    "skill": response.skill,
                    "payload": payload_to_wire(render_for_channel(response.payload, rest_caps)),
                }
                for seq, _turn, response in batch
            ],
        }

    # ------------------------------------------------------------------
    # WS protocol

    def _error(
        self, conn: ClientConnection, code: str, message: str,
        session_id: str | None = None,
    ) -> None:
        conn.send(
            {
                "v": PROTOCOL_VERSION,
                "type": "error",
                "session": session_id,
                "seq": 0,
                "payload": {"code": code, "message": message},
            }
        )

    def _ack(self, conn, type_: str, session_id: str | None, payload: dict) -> None:
        conn.send(
            {
                "v": PROTOCOL_VERSION,
                "type": type_,
                "session": session_id,
                "seq": 0,
                "payload": payload,
            }
        )

    def handle_raw(self, conn: ClientConnection, raw: str) -> None:
        try:
            frame = json.loads(raw)
            if not isinstance(frame, dict):
                raise ValueError("frame must be an object")
        except ValueError:
            self._error(conn, ERR_MALFORMED, "frame is not a JSON object")
            return
        self.handle_frame(conn, frame)

    def handle_frame(self, conn: ClientConnection, frame: dict) -> None:
        """Process one inbound frame; errors go only to the sender."""
        if frame.get("v") != PROTOCOL_VERSION:
            self._error(
                conn, ERR_VERSION,
                f"unsupported protocol version {frame.get('v')!r}; this server speaks 1",
            )
            return
        ftype = frame.get("type")
        if ftype not in _KNOWN_TYPES:
            self._error(conn, ERR_UNKNOWN_TYPE, f"unknown frame type {ftype!r}")
            return
        payload = frame.get("payload") or {}
        if not isinstance(payload, dict):
            self._error(conn, ERR_MALFORMED, "payload must be an object")
            return

        if ftype == "ping":
            self._ack(conn, "pong", conn.session_id, payload)
            return
        if ftype == "hello":
            self._ack(
                conn, "hello", None,
                {"server": "confbot", "protocol": PROTOCOL_VERSION},
            )
            return
        if ftype == "session_open":
            self._handle_open(conn, payload)
            return
        if ftype == "session_join":
            self._handle_join(conn, payload)
            return
        if ftype in _SEQUENCED_INBOUND:
            self._handle_sequenced(conn, frame, ftype, payload)
            return
        # bot_response / error / pong coming *from* a client make no sense
        self._error(conn, ERR_NOT_ALLOWED, f"clients may not send {ftype!r}")

    def _handle_open(self, conn: ClientConnection, payload: dict) -> None:
        kind = payload.get("channel", "webchat")
        try:
            channel = make_channel(kind, payload.get("rich_cards"))
        except ValueError as exc:
            self._error(conn, ERR_MALFORMED, str(exc))
            return
        try:
            session, token = self.open_session(channel)
        except CapacityError as exc:
            self._error(conn, ERR_CAPACITY, str(exc))
            return
        conn.channel = channel
        conn.session_id = session.session_id
        conn.group_token = token
        with self._lock:
            self._groups[token].members[conn.conn_id] = conn
        self._ack(
            conn, "session_open", session.session_id,
            {"group_token": token, "channel": kind},
        )

    def _handle_join(self, conn: ClientConnection, payload: dict) -> None:
        token = payload.get("group_token", "")
        kind = payload.get("channel", "screen")
        try:
            conn.channel = make_channel(kind, payload.get("rich_cards"))
        except ValueError as exc:
            self._error(conn, ERR_MALFORMED, str(exc))
            return
        try:
            session_id = self.join_group(token, conn)
        except KeyError:
            self._error(conn, ERR_UNKNOWN_GROUP, "unknown or expired group token")
            return
        except ValueError as exc:
            self._error(conn, ERR_GROUP_FULL, str(exc))
            return
        state = self.wire_state(session_id)
        self._ack(
            conn, "session_join", session_id,
            {"in_seq": state.in_seq, "out_seq": state.out_seq, "channel": kind},
        )
        self.replay_last_batch(conn)

    def _handle_sequenced(
        self, conn: ClientConnection, frame: dict, ftype: str, payload: dict
    ) -> None:
        session_id = frame.get("session")
        if not session_id or session_id != conn.session_id:
            self._error(
                conn, ERR_UNKNOWN_SESSION,
                "frame session does not match this connection",
                session_id,
            )
            return
        try:
            session = self.assistant.get_session(session_id)
        except UnknownSessionError:
            self._error(conn, ERR_UNKNOWN_SESSION, "unknown session", session_id)
            return
        state = self.wire_state(session_id)
        seq = frame.get("seq")
        if not isinstance(seq, int) or seq <= state.in_seq:
            self._error(
                conn, ERR_SEQ_ORDER,
                f"expected seq greater than {state.in_seq}", session_id,
            )
            return
        state.in_seq = seq

        if ftype == "user_utterance":
            if conn.channel is not None and conn.channel.display_only:
                self._error(
                    conn, ERR_NOT_ALLOWED, "display-only channels cannot speak",
                    session_id,
                )
                return
            text = payload.get("text")
            if not isinstance(text, str):
                self._error(conn, ERR_MALFORMED, "user_utterance needs text", session_id)
                return
            responses = self.assistant.handle_text(session_id, text)
            self.dispatch_responses(session, responses)
            return
        if ftype == "identify":
            token = payload.get("token")
            if not isinstance(token, str):
                self._error(conn, ERR_MALFORMED, "identify needs a token", session_id)
                return
            responses = self.assistant.handle_identify(session_id, token)
            self.dispatch_responses(session, responses)
            return
        if ftype == "consent":
            decision = payload.get("decision")
            if decision not in ("granted", "denied"):
                self._error(
                    conn, ERR_MALFORMED,
                    "consent decision must be granted or denied", session_id,
                )
                return
            try:
                responses = self.assistant.handle_consent(session_id, decision)
            except ProfileError as exc:
                self._error(conn, ERR_CONSENT_STATE, str(exc), session_id)
                return
            self.dispatch_responses(session, responses)


# ----------------------------------------------------------------------
# FastAPI application


def create_app(assistant: Assistant) -> FastAPI:
    app = FastAPI(title="confbot", docs_url=None, redoc_url=None)
    gateway = Gateway(assistant)
    app.state.gateway = gateway
    app.state.assistant = assistant

    @app.get("/api/health")
    async def health() -> dict:
        return assistant.health()

    @app.post("/api/message")
    async def message(body: dict) -> JSONResponse:
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            return JSONResponse({"error": "text required"}, status_code=400)
        session_id = body.get("session")
        try:
            doc = gateway.rest_message(session_id, text)
        except UnknownSessionError:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        except CapacityError as exc:
            return JSONResponse({"error": str(exc)}, status_code=503)
        return JSONResponse(doc)

    @app.get("/api/sessions/{session_id}/transcript")
    async def transcript(session_id: str, token: str = "") -> JSONResponse:
        admin_token = assistant.config.admin_token
        if not admin_token:
            return JSONResponse({"error": "admin token not configured"}, status_code=403)
        if token != admin_token:
            return JSONResponse({"error": "forbidden"}, status_code=403)
        try:
            records = assistant.transcript(session_id)
        except UnknownSessionError:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return JSONResponse([r.to_json() for r in records])

    @app.websocket("/ws")
    async def websocket_endpoint(websocket: WebSocket) -> None:
        await websocket.accept()
        outbox: asyncio.Queue = asyncio.Queue()
        conn = ClientConnection(send=outbox.put_nowait)

        async def writer() -> None:
            while True:
                frame = await outbox.get()
                await websocket.send_text(json.dumps(frame, ensure_ascii=False))

        writer_task = asyncio.create_task(writer())
        try:
            while True:
                raw = await websocket.receive_text()
                gateway.handle_raw(conn, raw)
                # let queued frames drain before accepting the next inbound
                while not outbox.empty():
                    await asyncio.sleep(0)
        except WebSocketDisconnect:
            pass
        finally:
            gateway.leave(conn)
            writer_task.cancel()

    static_dir = assistant.config.static_dir
    if static_dir and Path(static_dir).is_dir():
        app.mount("/chat", StaticFiles(directory=static_dir, html=True), name="chat")

    return app
