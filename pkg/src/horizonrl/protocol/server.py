"""Session dispatcher and its HTTP front end.

:class:`EnvServer` owns every live session. Sessions never share mutable
state: each holds an immutable episode state that is replaced on every
step. A per-session busy flag rejects overlapping calls with ``BUSY``.
"""

from __future__ import annotations

import itertools
import json
import logging
import secrets
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlparse

from ..envs import TaskSpec, get_family
from ..envs.base import EnvFamily
from ..errors import HorizonRLError, ProtocolError, ValidationError
from .types import HTTP_METHODS, EnvRequest, EnvResponse, Observation, StepResult, encode_response

log = logging.getLogger(__name__)

DEFAULT_SESSION_CAP = 256
_U64 = 1 << 64


@dataclass
class _Session:
    family: EnvFamily
    task: TaskSpec
    seed: int
    state: Any = None
    observation: Observation | None = None
    busy: bool = False


class EnvServer:
    def __init__(self, session_cap: int = DEFAULT_SESSION_CAP):
        if session_cap < 1:
            raise ValidationError("session_cap must be at least 1")
        self.session_cap = session_cap
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count()

    def __len__(self) -> int:
        return len(self._sessions)

    # lifecycle -------------------------------------------------------------
    def create_session(self, env_kind: str, task: TaskSpec | dict, seed: int) -> str:
        family = get_family(env_kind)
        if isinstance(task, dict):
            task = TaskSpec.from_dict(task)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < _U64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        family.validate(task)
        with self._lock:
            if len(self._sessions) >= self.session_cap:
                raise ProtocolError(f"session cap {self.session_cap} reached", code="CAPACITY")
            sid = f"{next(self._ids):x}-{secrets.token_hex(6)}"
            self._sessions[sid] = _Session(family, task, seed)
        return sid

    def close_session(self, session_id: str) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise ProtocolError(f"unknown session {session_id!r}", code="NOT_FOUND")
            if session.busy:
                raise ProtocolError("session has a call in flight", code="BUSY")
            del self._sessions[session_id]

    def _acquire(self, session_id: str) -> _Session:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise ProtocolError(f"unknown session {session_id!r}", code="NOT_FOUND")
            if session.busy:
                raise ProtocolError("session has a call in flight", code="BUSY")
            session.busy = True
            return session

    def _release(self, session: _Session) -> None:
        with self._lock:
            session.busy = False

    # episode ---------------------------------------------------------------
    def reset(self, session_id: str) -> Observation:
        session = self._acquire(session_id)
        try:
            state = session.family.initial_state(session.task, session.seed)
            session.state = state
            session.observation = Observation(session.family.initial_observation(state), 0, False)
            return session.observation
        finally:
            self._release(session)

    def step(self, session_id: str, action: str) -> StepResult:
        if not isinstance(action, str):
            raise ValidationError("action must be a string")
        session = self._acquire(session_id)
        try:
            if session.observation is None:
                raise ProtocolError("session has not been reset", code="NOT_RESET")
            if session.observation.done:
                raise ProtocolError("episode is over; reset first", code="EPISODE_OVER")
            out = session.family.transition(session.state, action)
            session.state = out.state
            session.observation = Observation(out.text, session.observation.turn_index + 1, out.done)
            return StepResult(session.observation, out.reward, out.done)
        finally:
            self._release(session)

    def observe(self, session_id: str) -> Observation:
        session = self._acquire(session_id)
        try:
            if session.observation is None:
                raise ProtocolError("session has not been reset", code="NOT_RESET")
            return session.observation
        finally:
            self._release(session)

    def available_actions(self, session_id: str) -> list[str]:
        session = self._acquire(session_id)
        try:
            if session.observation is None:
                raise ProtocolError("session has not been reset", code="NOT_RESET")
            return session.family.actions(session.state)
        finally:
            self._release(session)

    # request dispatch ------------------------------------------------------
    def handle(self, req: EnvRequest) -> EnvResponse:
        """Serve one decoded request; errors become structured responses."""
        try:
            return EnvResponse(payload=self._dispatch(req))
        except HorizonRLError as exc:
            return EnvResponse(error={"code": exc.code, "message": exc.message})

    def _dispatch(self, req: EnvRequest) -> dict[str, Any]:
        p = req.payload
        if req.endpoint == "create":
            try:
                sid = self.create_session(p["env_kind"], p["task"], p["seed"])
            except KeyError as exc:
                raise ValidationError(f"missing field {exc}") from None
            return {"session_id": sid}
        sid = req.session_id
        if not isinstance(sid, str):
            raise ValidationError("session_id is required")
        if req.endpoint == "reset":
            return self.reset(sid).to_payload()
        if req.endpoint == "step":
            if "action" not in p:
                raise ValidationError("missing field 'action'")
            return self.step(sid, p["action"]).to_payload()
        if req.endpoint == "observation":
            return self.observe(sid).to_payload()
        if req.endpoint == "available_actions":
            return {"actions": self.available_actions(sid)}
        if req.endpoint == "close":
            self.close_session(sid)
            return {"ok": True}
        raise ValidationError(f"unknown endpoint {req.endpoint!r}")


_STATUS = {
    "VALIDATION": 400,
    "NOT_FOUND": 404,
    "NOT_RESET": 409,
    "EPISODE_OVER": 409,
    "BUSY": 409,
    "CAPACITY": 503,
}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: EnvHTTPServer

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _reply(self, resp: EnvResponse) -> None:
        status = 200 if resp.ok else _STATUS.get(resp.error["code"], 500)
        body = encode_response(resp)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _route(self, method: str) -> None:
        url = urlparse(self.path)
        endpoint = url.path.strip("/")
        if HTTP_METHODS.get(endpoint) != method:
            self._reply(EnvResponse(error={"code": "VALIDATION", "message": f"no route {method} {url.path}"}))
            return
        if method == "GET":
            sid = parse_qs(url.query).get("session_id", [None])[0]
            req = EnvRequest(endpoint, sid)
        else:
            length = int(self.headers.get("Content-Length") or 0)
            try:
                body = json.loads(self.rfile.read(length).decode("utf-8") or "{}")
                if not isinstance(body, dict):
                    raise ValueError("body must be a JSON object")
            except ValueError as exc:
                self._reply(EnvResponse(error={"code": "VALIDATION", "message": str(exc)}))
                return
            sid = body.pop("session_id", None)
            req = EnvRequest(endpoint, sid, body)
        self._reply(self.server.env.handle(req))

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")


class EnvHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], env: EnvServer):
        self.env = env
        super().__init__(address, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def serve_in_thread(env: EnvServer, host: str = "127.0.0.1", port: int = 0) -> EnvHTTPServer:
    """Start an HTTP front end on a daemon thread; call ``shutdown()`` to stop."""
    httpd = EnvHTTPServer((host, port), env)
    threading.Thread(target=httpd.serve_forever, name="env-http", daemon=True).start()
    return httpd
