"""Wire protocol and client for delegating span-label scoring to another process.

Messages are newline-delimited JSON objects, UTF-8 encoded.  Each side must
send the handshake line first.  Requests may be pipelined; responses are
matched by request_id and may arrive in any order.  The scorer can live
behind a child process (stdio) or a TCP endpoint.
"""

from __future__ import annotations

import itertools
import json
import math
import socket as socket_module
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import InvalidInputError, LemirError

__all__ = [
    "PROTOCOL_NAME",
    "PROTOCOL_VERSION",
    "ScoreRequest",
    "ScoreResponse",
    "ScorerError",
    "ScorerProtocolError",
    "MalformedMessageError",
    "HandshakeError",
    "DimensionMismatchError",
    "ScoreRangeError",
    "DuplicateRequestIdError",
    "RemoteRequestError",
    "ScorerTimeoutError",
    "ScorerClosedError",
    "handshake_line",
    "parse_handshake",
    "encode_request",
    "decode_request",
    "encode_response",
    "decode_response",
    "validate_response",
    "PendingScore",
    "ScorerClient",
    "connect_stdio",
    "connect_tcp",
]

PROTOCOL_NAME = "glilem-scorer"
PROTOCOL_VERSION = 1

DEFAULT_TIMEOUT = 30.0


class ScorerError(LemirError):
    """Base for all scorer transport and protocol failures."""


class ScorerProtocolError(ScorerError):
    """The peer violated the wire protocol."""


class MalformedMessageError(ScorerProtocolError):
    """A line was not valid UTF-8 JSON of the expected shape."""


class HandshakeError(ScorerProtocolError):
    """Missing or incompatible handshake line."""


class DimensionMismatchError(ScorerProtocolError):
    """A score matrix does not match the request's span/label counts."""


class ScoreRangeError(ScorerProtocolError):
    """A score value is not a finite number in [0, 1]."""


class DuplicateRequestIdError(ScorerProtocolError):
    """A request_id was reused while still in flight."""


class RemoteRequestError(ScorerProtocolError):
    """The scorer answered a request with an error payload."""


class ScorerTimeoutError(ScorerError):
    """No response arrived within the allowed time."""


class ScorerClosedError(ScorerError):
    """The connection is closed."""


@dataclass(frozen=True)
class ScoreRequest:
    request_id: str
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]  # inclusive (start_token, end_token)
    labels: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.request_id, str) or not self.request_id:
            raise InvalidInputError("request_id must be a non-empty string")
        for start, end in self.spans:
            if not (0 <= start <= end < len(self.tokens)):
                raise InvalidInputError(
                    f"span ({start}, {end}) outside range of {len(self.tokens)} tokens"
                )
        for label in self.labels:
            if not isinstance(label, str) or not label:
                raise InvalidInputError("labels must be non-empty strings")


@dataclass(frozen=True)
class ScoreResponse:
    request_id: str
    scores: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        widths = {len(row) for row in self.scores}
        if len(widths) > 1:
            raise DimensionMismatchError("score matrix rows have differing lengths")
        for row in self.scores:
            for value in row:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ScoreRangeError(f"score {value!r} is not a number")
                if not math.isfinite(value) or not (0.0 <= value <= 1.0):
                    raise ScoreRangeError(f"score {value!r} outside [0, 1]")


def handshake_line() -> str:
    return json.dumps({"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION})


def parse_handshake(line: str) -> None:
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise HandshakeError(f"handshake line is not valid JSON: {line!r}") from exc
    if not isinstance(obj, dict) or obj.get("protocol") != PROTOCOL_NAME:
        raise HandshakeError(f"peer did not identify as {PROTOCOL_NAME!r}: {line!r}")
    if obj.get("version") != PROTOCOL_VERSION:
        raise HandshakeError(
            f"protocol version mismatch: peer {obj.get('version')!r}, ours {PROTOCOL_VERSION}"
        )


def encode_request(request: ScoreRequest) -> str:
    return json.dumps(
        {
            "type": "request",
            "request_id": request.request_id,
            "tokens": list(request.tokens),
            "spans": [[s, e] for s, e in request.spans],
            "labels": list(request.labels),
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


def _decode_object(line: str) -> dict:
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise MalformedMessageError(f"invalid JSON: {line!r}") from exc
    if not isinstance(obj, dict):
        raise MalformedMessageError(f"expected a JSON object, got {type(obj).__name__}")
    return obj


def decode_request(line: str) -> ScoreRequest:
    """Parse a request line; unknown fields are ignored."""
    obj = _decode_object(line)
    if obj.get("type") != "request":
        raise MalformedMessageError(f"expected a request, got type {obj.get('type')!r}")
    try:
        return ScoreRequest(
            request_id=obj["request_id"],
            tokens=tuple(obj["tokens"]),
            spans=tuple((int(s), int(e)) for s, e in obj["spans"]),
            labels=tuple(obj["labels"]),
        )
    except MalformedMessageError:
        raise
    except (KeyError, TypeError, ValueError, LemirError) as exc:
        raise MalformedMessageError(f"bad request fields: {exc}") from exc


def encode_response(response: ScoreResponse) -> str:
    return json.dumps(
        {
            "type": "response",
            "request_id": response.request_id,
            "scores": [list(row) for row in response.scores],
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


def decode_response(line: str) -> ScoreResponse:
    """Parse a response line; an error payload raises RemoteRequestError."""
    obj = _decode_object(line)
    kind = obj.get("type")
    if kind == "error":
        raise RemoteRequestError(
            f"request {obj.get('request_id')!r} failed remotely: {obj.get('message')!r}"
        )
    if kind != "response":
        raise MalformedMessageError(f"expected a response, got type {kind!r}")
    try:
        return ScoreResponse(
            request_id=obj["request_id"],
            scores=tuple(tuple(float(v) for v in row) for row in obj["scores"]),
        )
    except ScorerProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedMessageError(f"bad response fields: {exc}") from exc


def validate_response(request: ScoreRequest, response: ScoreResponse) -> None:
    if response.request_id != request.request_id:
        raise ScorerProtocolError(
            f"response id {response.request_id!r} does not match request {request.request_id!r}"
        )
    if len(response.scores) != len(request.spans):
        raise DimensionMismatchError(
            f"expected {len(request.spans)} score rows, got {len(response.scores)}"
        )
    for row in response.scores:
        if len(row) != len(request.labels):
            raise DimensionMismatchError(
                f"expected {len(request.labels)} score columns, got {len(row)}"
            )


class PendingScore:
    """A submitted request awaiting its response."""

    def __init__(self, request: ScoreRequest):
        self.request = request
        self._event = threading.Event()
        self._response: ScoreResponse | None = None
        self._error: ScorerError | None = None

    def _resolve(self, response: ScoreResponse | None, error: ScorerError | None) -> None:
        self._response = response
        self._error = error
        self._event.set()

    def result(self, timeout: float | None = None) -> ScoreResponse:
        if not self._event.wait(timeout):
            raise ScorerTimeoutError(
                f"request {self.request.request_id!r} timed out after {timeout} s"
            )
        if self._error is not None:
            raise self._error
        assert self._response is not None
        return self._response


class ScorerClient:
    """Multiplexes pipelined score requests over one connection.

    A background thread reads responses and resolves the matching pending
    request; callers may submit concurrently.  Any transport or protocol
    failure poisons the connection and fails all in-flight requests.
    """

    def __init__(self, reader, writer, timeout: float = DEFAULT_TIMEOUT, *, process=None, sock=None):
        self._reader = reader
        self._writer = writer
        self._timeout = timeout
        self._process = process
        self._socket = sock
        self._lock = threading.Lock()
        self._pending: dict[str, PendingScore] = {}
        self._closed_error: ScorerError | None = None
        self._handshake_done = threading.Event()
        self._handshake_error: ScorerError | None = None
        self._id_counter = itertools.count(1)
        self._thread: threading.Thread | None = None
        try:
            self._write_line(handshake_line())
            self._thread = threading.Thread(target=self._read_loop, daemon=True)
            self._thread.start()
            if not self._handshake_done.wait(timeout):
                raise ScorerTimeoutError(f"no handshake from scorer within {timeout} s")
            if self._handshake_error is not None:
                raise self._handshake_error
        except BaseException:
            self.close()
            raise

    # -- transport ---------------------------------------------------------

    def _write_line(self, line: str) -> None:
        data = line.encode("utf-8") + b"\n"
        with self._lock:
            if self._closed_error is not None:
                raise self._closed_error
            try:
                self._writer.write(data)
                self._writer.flush()
            except (OSError, ValueError) as exc:
                raise ScorerClosedError(f"connection closed while writing: {exc}") from exc

    def _read_loop(self) -> None:
        expect_handshake = True
        while True:
            try:
                raw = self._reader.readline()
            except (OSError, ValueError):
                raw = b""
            if not raw:
                error: ScorerError = ScorerClosedError("connection closed by scorer")
                if expect_handshake:
                    self._handshake_error = error
                    self._handshake_done.set()
                self._fail_all(error)
                return
            try:
                line = raw.decode("utf-8").rstrip("\r\n")
            except UnicodeDecodeError:
                self._fail_all(MalformedMessageError("peer sent a non-UTF-8 line"))
                return
            if not line:
                continue
            if expect_handshake:
                try:
                    parse_handshake(line)
                except HandshakeError as exc:
                    self._handshake_error = exc
                    self._handshake_done.set()
                    self._fail_all(exc)
                    return
                expect_handshake = False
                self._handshake_done.set()
                continue
            try:
                response = decode_response(line)
            except RemoteRequestError as exc:
                # a remote error payload fails only the request it names
                rid = self._extract_id(line)
                if rid is not None and self._resolve_pending(rid, None, exc):
                    continue
                self._fail_all(exc)
                return
            except ScorerProtocolError as exc:
                self._fail_all(exc)
                return
            pending = self._take(response.request_id)
            if pending is None:
                self._fail_all(
                    ScorerProtocolError(
                        f"response for unknown request_id {response.request_id!r}"
                    )
                )
                return
            try:
                validate_response(pending.request, response)
            except ScorerProtocolError as exc:
                pending._resolve(None, exc)
                self._fail_all(exc)
                return
            pending._resolve(response, None)

    @staticmethod
    def _extract_id(line: str) -> str | None:
        try:
            obj = json.loads(line)
        except ValueError:
            return None
        rid = obj.get("request_id") if isinstance(obj, dict) else None
        return rid if isinstance(rid, str) else None

    def _take(self, request_id: str) -> PendingScore | None:
        with self._lock:
            return self._pending.pop(request_id, None)

    def _resolve_pending(self, request_id: str, response, error) -> bool:
        pending = self._take(request_id)
        if pending is None:
            return False
        pending._resolve(response, error)
        return True

    def _fail_all(self, error: ScorerError) -> None:
        with self._lock:
            if self._closed_error is None:
                self._closed_error = error
            pending = list(self._pending.values())
            self._pending.clear()
        for p in pending:
            p._resolve(None, error)

    # -- public API --------------------------------------------------------

    def submit(self, request: ScoreRequest) -> PendingScore:
        """Send a request without waiting; responses may arrive in any order."""
        pending = PendingScore(request)
        with self._lock:
            if self._closed_error is not None:
                raise self._closed_error
            if request.request_id in self._pending:
                raise DuplicateRequestIdError(
                    f"request_id {request.request_id!r} is already in flight"
                )
            self._pending[request.request_id] = pending
        try:
            self._write_line(encode_request(request))
        except ScorerError:
            self._take(request.request_id)
            raise
        return pending

    def score(self, request: ScoreRequest, timeout: float | None = None) -> ScoreResponse:
        return self.submit(request).result(self._timeout if timeout is None else timeout)

    def next_request_id(self) -> str:
        return f"q{next(self._id_counter)}"

    def as_scorer(self) -> Callable[[Sequence[str], Sequence[tuple[int, int]], Sequence[str]], list[list[float]]]:
        """Adapt this client to the span matcher's scorer callable."""

        def scorer(tokens, spans, labels):
            request = ScoreRequest(
                request_id=self.next_request_id(),
                tokens=tuple(tokens),
                spans=tuple((int(s), int(e)) for s, e in spans),
                labels=tuple(labels),
            )
            response = self.score(request)
            return [list(row) for row in response.scores]

        return scorer

    def close(self) -> None:
        with self._lock:
            if self._closed_error is None:
                self._closed_error = ScorerClosedError("client closed")
            pending = list(self._pending.values())
            self._pending.clear()
        for p in pending:
            p._resolve(None, ScorerClosedError("client closed"))
        # unblock the reader thread before touching the reader stream:
        # closing a buffered reader contends on the lock held by a blocked
        # readline, so first make the peer hang up (writer close = EOF for a
        # child process; socket shutdown; process terminate), then join.
        try:
            self._writer.close()
        except (OSError, ValueError):
            pass
        if self._socket is not None:
            try:
                self._socket.shutdown(socket_module.SHUT_RDWR)
            except OSError:
                pass
        if self._process is not None:
            try:
                self._process.terminate()
            except OSError:
                pass
        thread = self._thread
        if thread is not None and thread is not threading.current_thread():
            thread.join(timeout=2.0)
        if thread is None or not thread.is_alive():
            try:
                self._reader.close()
            except (OSError, ValueError):
                pass
        if self._socket is not None:
            try:
                self._socket.close()
            except OSError:
                pass
        if self._process is not None:
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._process.kill()
                try:
                    self._process.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    pass

    def __enter__(self) -> "ScorerClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect_stdio(command: Sequence[str], timeout: float = DEFAULT_TIMEOUT) -> ScorerClient:
    """Spawn a scorer child process and connect over its stdin/stdout.

    The child's stderr is inherited so its diagnostics reach the error
    stream directly.
    """
    process = subprocess.Popen(
        list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
    )
    return ScorerClient(process.stdout, process.stdin, timeout, process=process)


def connect_tcp(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> ScorerClient:
    sock = socket_module.create_connection((host, port), timeout=timeout)
    # per-request timeouts are enforced by the client; keep the socket blocking
    sock.settimeout(None)
    reader = sock.makefile("rb")
    writer = sock.makefile("wb")
    return ScorerClient(reader, writer, timeout, sock=sock)
