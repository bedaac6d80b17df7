"""Serving loops: stdio child-process mode and a sequential TCP mode.

Both sides of the wire send a handshake line first.  After that the
server answers every request line with exactly one response line, in
order.  A bad request gets an in-band error payload naming the request
when its id can be recovered; the connection keeps serving.  EOF from
the peer is a clean shutdown.
"""

from __future__ import annotations

import socket
import sys

from .errors import BadRequestError, ModelError, ScorerServiceError
from .protocol import (
    check_handshake,
    decode_request,
    encode_error,
    encode_response,
    handshake_line,
    request_id_of,
)


SUPPORTED_DEVICES = ("cpu",)


class ScorerSession:
    """One loaded model plus the per-request policy around it."""

    def __init__(self, model, max_len: int = 512, device: str = "cpu"):
        if device not in SUPPORTED_DEVICES:
            raise ModelError(f"unsupported device {device!r}, have {SUPPORTED_DEVICES}")
        self.model = model
        self.max_len = max_len
        self.device = device

    def score(self, request):
        packed = self.model.packed_length(len(request.labels), len(request.tokens))
        if packed > self.max_len:
            raise BadRequestError(
                f"request packs to {packed} positions, limit is {self.max_len}"
            )
        return self.model.score_matrix(request.tokens, request.spans, request.labels)

    def handle_line(self, line: str) -> str:
        """One reply line for one request line; never raises on bad input."""
        try:
            request = decode_request(line)
        except BadRequestError as exc:
            return encode_error(request_id_of(line), str(exc))
        try:
            scores = self.score(request)
        except ScorerServiceError as exc:
            return encode_error(request.request_id, str(exc))
        return encode_response(request.request_id, scores)


def _write_line(writer, line: str) -> None:
    writer.write(line.encode("utf-8") + b"\n")
    writer.flush()


def serve_streams(session: ScorerSession, reader, writer) -> int:
    """Serve one peer over binary line streams; 0 on clean EOF."""
    try:
        _write_line(writer, handshake_line())
        greeting = reader.readline()
        if not greeting:
            return 0
        try:
            check_handshake(greeting.decode("utf-8", errors="replace").strip())
        except BadRequestError as exc:
            print(f"handshake failed: {exc}", file=sys.stderr)
            return 1
        while True:
            raw = reader.readline()
            if not raw:
                return 0
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            _write_line(writer, session.handle_line(line))
    except (BrokenPipeError, ConnectionResetError):
        return 0


def serve_stdio(session: ScorerSession) -> int:
    return serve_streams(session, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(
    session: ScorerSession,
    host: str,
    port: int,
    *,
    max_connections=None,
    on_bound=None,
) -> int:
    """Accept connections one at a time, each served to EOF."""
    with socket.create_server((host, port)) as server:
        if on_bound is not None:
            on_bound(server.getsockname()[1])
        served = 0
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn:
                reader = conn.makefile("rb")
                writer = conn.makefile("wb")
                try:
                    serve_streams(session, reader, writer)
                finally:
                    reader.close()
                    try:
                        writer.close()
                    except (BrokenPipeError, ConnectionResetError, OSError):
                        pass
            served += 1
    return 0
