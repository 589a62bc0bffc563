"""Clients for the environment server.

:class:`LocalClient` calls an in-process :class:`EnvServer` directly (the
default for training); :class:`HttpClient` speaks the HTTP wire format.
Both raise :class:`ProtocolError` with the server's error code.
"""

from __future__ import annotations

import requests

from ..envs import TaskSpec
from ..errors import ProtocolError
from .server import EnvServer
from .types import (
    EnvRequest,
    EnvResponse,
    Observation,
    StepResult,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)


class EnvClient:
    def create_session(self, env_kind: str, task: TaskSpec, seed: int) -> str:
        raise NotImplementedError

    def reset(self, session_id: str) -> Observation:
        raise NotImplementedError

    def step(self, session_id: str, action: str) -> StepResult:
        raise NotImplementedError

    def observe(self, session_id: str) -> Observation:
        raise NotImplementedError

    def available_actions(self, session_id: str) -> list[str]:
        raise NotImplementedError

    def close_session(self, session_id: str) -> None:
        raise NotImplementedError


class LocalClient(EnvClient):
    """Direct calls into a server object.

    With ``wire=True`` every call is encoded, dispatched through
    :meth:`EnvServer.handle` and decoded again, exercising the codec without
    a socket.
    """

    def __init__(self, server: EnvServer, wire: bool = False):
        self.server = server
        self.wire = wire

    def _call(self, endpoint: str, session_id: str | None = None, **payload) -> dict:
        req = decode_request(encode_request(EnvRequest(endpoint, session_id, payload)))
        resp = decode_response(encode_response(self.server.handle(req)))
        return resp.unwrap()

    def create_session(self, env_kind, task, seed):
        if self.wire:
            return self._call("create", env_kind=env_kind, task=task.to_dict(), seed=seed)["session_id"]
        return self.server.create_session(env_kind, task, seed)

    def reset(self, session_id):
        if self.wire:
            return Observation.from_payload(self._call("reset", session_id))
        return self.server.reset(session_id)

    def step(self, session_id, action):
        if self.wire:
            return StepResult.from_payload(self._call("step", session_id, action=action))
        return self.server.step(session_id, action)

    def observe(self, session_id):
        if self.wire:
            return Observation.from_payload(self._call("observation", session_id))
        return self.server.observe(session_id)

    def available_actions(self, session_id):
        if self.wire:
            return list(self._call("available_actions", session_id)["actions"])
        return self.server.available_actions(session_id)

    def close_session(self, session_id):
        if self.wire:
            self._call("close", session_id)
        else:
            self.server.close_session(session_id)


class HttpClient(EnvClient):
    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._http = requests.Session()

    def _call(self, method: str, endpoint: str, session_id: str | None = None, **payload) -> dict:
        url = f"{self.base_url}/{endpoint}"
        try:
            if method == "GET":
                r = self._http.get(url, params={"session_id": session_id}, timeout=self.timeout)
            else:
                body = dict(payload)
                if session_id is not None:
                    body["session_id"] = session_id
                r = self._http.post(url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ProtocolError(f"transport failure: {exc}", code="UNAVAILABLE") from None
        body = r.json()
        if isinstance(body, dict) and "error" in body and set(body) == {"error"}:
            return EnvResponse(error=body["error"]).unwrap()
        return body

    def create_session(self, env_kind, task, seed):
        return self._call("POST", "create", env_kind=env_kind, task=task.to_dict(), seed=seed)["session_id"]

    def reset(self, session_id):
        return Observation.from_payload(self._call("POST", "reset", session_id))

    def step(self, session_id, action):
        return StepResult.from_payload(self._call("POST", "step", session_id, action=action))

    def observe(self, session_id):
        return Observation.from_payload(self._call("GET", "observation", session_id))

    def available_actions(self, session_id):
        return list(self._call("GET", "available_actions", session_id)["actions"])

    def close_session(self, session_id):
        self._call("POST", "close", session_id)

    def close(self) -> None:
        self._http.close()
