"""Newline-delimited JSON wire protocol for external translation models.

Protocol "refsmith-model v1": the client writes one request record per
line and reads exactly one response record per request, in order.

    request:  {"v": 1, "source_prefix": [...], "target_prefix": [...], "n_best": N}
    response: {"v": 1, "candidates": [{"token": "w", "logprob": -0.12}, ...]}

The token "</s>" denotes end of sentence. Unknown fields are ignored.
Connections run over the standard streams of a spawned subprocess or a
TCP socket; each connection carries one request at a time.
"""

from __future__ import annotations

import json
import select
import shlex
import socket
import subprocess
import threading
import time

from .decoder import ModelQuery, ModelResponse, ResponseInvariantError, validate_response

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


class ModelProtocolError(RuntimeError):
    """Base class for failures while talking to an external model."""

    def __init__(self, message: str, raw=None):
        if raw is not None:
            message = f"{message} (raw record: {raw!r})"
        super().__init__(message)
        self.raw = raw


class ModelTimeout(ModelProtocolError):
    """The model did not answer within the configured timeout."""


class MalformedRecord(ModelProtocolError):
    """A response line was not a valid protocol record."""


class ResponseViolation(ModelProtocolError):
    """A parsed response record violates the response invariants."""


class _SubprocessTransport:
    def __init__(self, argv: list[str]):
        self.argv = argv
        self._buffer = bytearray()
        try:
            # unbuffered pipes: select() sees exactly what read() will see
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                bufsize=0,
            )
        except OSError as exc:
            raise ModelProtocolError(f"cannot spawn model process {argv!r}: {exc}")

    def send_line(self, line: str) -> None:
        view = memoryview(line.encode("utf-8") + b"\n")
        try:
            while view:
                written = self.proc.stdin.write(view)
                view = view[written:]
        except OSError as exc:
            raise ModelProtocolError(f"model process pipe closed: {exc}")

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        stream = self.proc.stdout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ModelTimeout(f"no response within {timeout} s")
            ready, _, _ = select.select([stream], [], [], remaining)
            if not ready:
                raise ModelTimeout(f"no response within {timeout} s")
            chunk = stream.read(4096)
            if not chunk:
                raise ModelProtocolError("truncated stream: model process closed stdout")
            self._buffer.extend(chunk)
        line, _, rest = bytes(self._buffer).partition(b"\n")
        self._buffer = bytearray(rest)
        return line.decode("utf-8")

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ModelProtocolError(f"cannot connect to model at {host}:{port}: {exc}")
        self.reader = self.sock.makefile("rb")

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise ModelProtocolError(f"model connection closed: {exc}")

    def recv_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self.reader.readline()
        except socket.timeout:
            raise ModelTimeout(f"no response within {timeout} s") from None
        except OSError as exc:
            raise ModelProtocolError(f"model connection error: {exc}")
        if not line:
            raise ModelProtocolError("truncated stream: model closed the connection")
        return line.rstrip(b"\n").decode("utf-8")

    def close(self) -> None:
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class ExternalModelClient:
    """One exclusively-owned connection to an external model.

    Requests are strictly serialized: a lock guarantees one outstanding
    request per connection. After a protocol error the stream may be
    misaligned, so callers should reset() before reusing the connection.
    """

    def __init__(self, transport_factory, timeout: float = DEFAULT_TIMEOUT):
        self._factory = transport_factory
        self.timeout = timeout
        self._lock = threading.Lock()
        self._transport = transport_factory()

    @classmethod
    def spawn(cls, command, timeout: float = DEFAULT_TIMEOUT) -> "ExternalModelClient":
        """Spawn a model subprocess speaking the protocol on its stdio."""
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        return cls(lambda: _SubprocessTransport(argv), timeout=timeout)

    @classmethod
    def connect(cls, host: str, port: int,
                timeout: float = DEFAULT_TIMEOUT) -> "ExternalModelClient":
        return cls(lambda: _TcpTransport(host, port, timeout), timeout=timeout)

    def query(self, q: ModelQuery) -> ModelResponse:
        request = json.dumps(
            {
                "v": PROTOCOL_VERSION,
                "source_prefix": list(q.source_prefix),
                "target_prefix": list(q.target_prefix),
                "n_best": q.n_best,
            },
            ensure_ascii=False,
        )
        with self._lock:
            self._transport.send_line(request)
            line = self._transport.recv_line(self.timeout)
        return _parse_response_line(line)

    def reset(self) -> None:
        """Tear down and re-establish the connection."""
        with self._lock:
            self._transport.close()
            self._transport = self._factory()

    def close(self) -> None:
        with self._lock:
            self._transport.close()


def _parse_response_line(line: str) -> ModelResponse:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"response is not valid JSON: {exc}", raw=line)
    if not isinstance(record, dict):
        raise MalformedRecord("response record is not an object", raw=line)
    if record.get("v") != PROTOCOL_VERSION:
        raise MalformedRecord(
            f"unsupported protocol version {record.get('v')!r}", raw=line)
    raw_candidates = record.get("candidates")
    if not isinstance(raw_candidates, list):
        raise MalformedRecord("response has no candidates list", raw=line)
    pairs = []
    for item in raw_candidates:
        if (
            not isinstance(item, dict)
            or not isinstance(item.get("token"), str)
            or not isinstance(item.get("logprob"), (int, float))
        ):
            raise MalformedRecord(f"bad candidate record {item!r}", raw=line)
        pairs.append((item["token"], float(item["logprob"])))
    try:
        return validate_response(pairs)
    except ResponseInvariantError as exc:
        raise ResponseViolation(str(exc), raw=line) from None
