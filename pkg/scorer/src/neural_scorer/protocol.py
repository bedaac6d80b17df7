"""Server-side codec for the glilem-scorer wire protocol, version 1.

One JSON object per line, UTF-8.  Both sides send a handshake line first.
A request carries request_id, tokens, inclusive token spans, and label
strings; the reply echoes the id with a spans x labels matrix in [0, 1].
A broken request gets an in-band error payload and the server keeps going.

Implemented from the wire format alone so this package has no runtime
dependency on the client side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import BadRequestError

PROTOCOL_NAME = "glilem-scorer"
PROTOCOL_VERSION = 1


def handshake_line() -> str:
    return json.dumps({"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION})


def check_handshake(line: str) -> None:
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise BadRequestError(f"handshake is not valid JSON: {line!r}") from exc
    if not isinstance(obj, dict) or obj.get("protocol") != PROTOCOL_NAME:
        raise BadRequestError(f"peer did not identify as {PROTOCOL_NAME!r}")
    if obj.get("version") != PROTOCOL_VERSION:
        raise BadRequestError(
            f"unsupported protocol version {obj.get('version')!r}, expected {PROTOCOL_VERSION}"
        )


@dataclass(frozen=True)
class Request:
    request_id: str
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]
    labels: tuple[str, ...]


def _string_list(obj: dict, key: str, allow_empty_items: bool) -> tuple[str, ...]:
    value = obj.get(key)
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise BadRequestError(f"{key} must be a list of strings")
    if not allow_empty_items and any(v == "" for v in value):
        raise BadRequestError(f"{key} must not contain empty strings")
    return tuple(value)


def decode_request(line: str) -> Request:
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise BadRequestError(f"invalid JSON: {line.strip()!r}") from exc
    if not isinstance(obj, dict):
        raise BadRequestError("expected a JSON object")
    if obj.get("type") != "request":
        raise BadRequestError(f"expected type 'request', got {obj.get('type')!r}")
    request_id = obj.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise BadRequestError("request_id must be a non-empty string")
    tokens = _string_list(obj, "tokens", allow_empty_items=True)
    labels = _string_list(obj, "labels", allow_empty_items=False)
    raw_spans = obj.get("spans")
    if not isinstance(raw_spans, list):
        raise BadRequestError("spans must be a list")
    spans = []
    for item in raw_spans:
        if (
            not isinstance(item, list)
            or len(item) != 2
            or any(not isinstance(v, int) or isinstance(v, bool) for v in item)
        ):
            raise BadRequestError(f"span {item!r} must be a [start, end] integer pair")
        start, end = item
        if not (0 <= start <= end < len(tokens)):
            raise BadRequestError(
                f"span ({start}, {end}) outside range of {len(tokens)} tokens"
            )
        spans.append((start, end))
    return Request(request_id, tokens, tuple(spans), labels)


def encode_response(request_id: str, scores) -> str:
    return json.dumps(
        {
            "type": "response",
            "request_id": request_id,
            "scores": [[float(v) for v in row] for row in scores],
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


def encode_error(request_id, message: str) -> str:
    return json.dumps(
        {"type": "error", "request_id": request_id, "message": message},
        ensure_ascii=False,
        separators=(",", ":"),
    )


def request_id_of(line: str):
    """Best-effort id recovery from a line that failed to decode."""
    try:
        obj = json.loads(line)
    except ValueError:
        return None
    if isinstance(obj, dict):
        value = obj.get("request_id")
        if isinstance(value, str):
            return value
    return None
