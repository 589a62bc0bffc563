"""Wire-level types and the JSON codec.

Field names are fixed: session_id, env_kind, task, seed, action,
observation, reward, done, turn_index, actions, error{code,message}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from ..errors import ProtocolError, ValidationError

ActionList = list[str]

ENDPOINTS = ("create", "reset", "step", "observation", "available_actions", "close")
HTTP_METHODS = {
    "create": "POST",
    "reset": "POST",
    "step": "POST",
    "observation": "GET",
    "available_actions": "GET",
    "close": "POST",
}


@dataclass(frozen=True)
class Observation:
    text: str
    turn_index: int
    done: bool

    def to_payload(self) -> dict[str, Any]:
        return {"observation": self.text, "turn_index": self.turn_index, "done": self.done}

    @classmethod
    def from_payload(cls, p: dict[str, Any]) -> Observation:
        return cls(p["observation"], int(p["turn_index"]), bool(p["done"]))


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool

    def to_payload(self) -> dict[str, Any]:
        out = self.observation.to_payload()
        out["reward"] = self.reward
        return out

    @classmethod
    def from_payload(cls, p: dict[str, Any]) -> StepResult:
        return cls(Observation.from_payload(p), float(p["reward"]), bool(p["done"]))


@dataclass(frozen=True)
class EnvRequest:
    endpoint: str
    session_id: str | None = None
    payload: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class EnvResponse:
    payload: dict[str, Any] | None = None
    error: dict[str, str] | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def unwrap(self) -> dict[str, Any]:
        if self.error is not None:
            raise ProtocolError(self.error["message"], code=self.error["code"])
        return self.payload or {}


def encode_request(req: EnvRequest) -> bytes:
    body: dict[str, Any] = {"endpoint": req.endpoint}
    if req.session_id is not None:
        body["session_id"] = req.session_id
    body["payload"] = req.payload
    return json.dumps(body, ensure_ascii=False, sort_keys=True, allow_nan=False).encode("utf-8")


def decode_request(data: bytes) -> EnvRequest:
    try:
        body = json.loads(data.decode("utf-8"))
        endpoint = body["endpoint"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"undecodable request: {exc}") from None
    if endpoint not in ENDPOINTS:
        raise ValidationError(f"unknown endpoint {endpoint!r}")
    return EnvRequest(endpoint, body.get("session_id"), body.get("payload") or {})


def encode_response(resp: EnvResponse) -> bytes:
    body = {"error": resp.error} if resp.error is not None else resp.payload
    return json.dumps(body, ensure_ascii=False, sort_keys=True, allow_nan=False).encode("utf-8")


def decode_response(data: bytes) -> EnvResponse:
    body = json.loads(data.decode("utf-8"))
    if isinstance(body, dict) and set(body) == {"error"}:
        return EnvResponse(error=body["error"])
    return EnvResponse(payload=body)
