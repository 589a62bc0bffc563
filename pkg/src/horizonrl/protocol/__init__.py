from .client import EnvClient, HttpClient, LocalClient
from .server import DEFAULT_SESSION_CAP, EnvHTTPServer, EnvServer, serve_in_thread
from .types import (
    ENDPOINTS,
    ActionList,
    EnvRequest,
    EnvResponse,
    Observation,
    StepResult,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)

__all__ = [
    "DEFAULT_SESSION_CAP",
    "ENDPOINTS",
    "ActionList",
    "EnvClient",
    "EnvHTTPServer",
    "EnvRequest",
    "EnvResponse",
    "EnvServer",
    "HttpClient",
    "LocalClient",
    "Observation",
    "StepResult",
    "decode_request",
    "decode_response",
    "encode_request",
    "encode_response",
    "serve_in_thread",
]
