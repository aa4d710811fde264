"""Detector wire protocol over a child process's standard streams.

One UTF-8 JSON object per newline-terminated line. Message types:

* harness -> detector: ``hello``, ``score``, ``shutdown``
* detector -> harness: ``hello_ack``, ``scores``, ``error``

Emitted messages are serialized compactly (no spaces) with fields in a
documented order so conformance transcripts can be compared byte-for-byte:

* ``hello``:       type, protocol_version
* ``hello_ack``:   type, name, version, protocol_version, input_policy,
                   input_size (only when the policy requires one),
                   score_direction
* ``score``:       type, batch_id, preprocessed (only when true), items;
                   each item: id, path
* ``scores``:      type, batch_id, scores; each entry: id, score
* ``error``:       type, message
* ``shutdown``:    type

Parsing accepts any key order. The harness sets ``SIDBENCH_PROTOCOL=1`` in
the detector's environment and reserves stderr for detector logs.
"""

from __future__ import annotations

import json
import math
import os
import queue
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_SECS = 30.0
SHUTDOWN_GRACE_SECS = 5.0
INPUT_POLICIES = ("none", "center_crop", "resize")
SCORE_DIRECTION = "higher_is_fake"
PROTOCOL_ENV = "SIDBENCH_PROTOCOL"

_STDERR_TAIL_LINES = 20


class ProtocolError(RuntimeError):
    """Any violation of the detector wire protocol."""


class HandshakeError(ProtocolError):
    pass


class ProtocolTimeout(ProtocolError):
    pass


class DetectorExited(ProtocolError):
    pass


@dataclass(frozen=True)
class DetectorDescriptor:
    """A detector's self-description from its hello_ack."""

    name: str
    version: str
    protocol_version: int = PROTOCOL_VERSION
    input_policy: str = "none"
    input_size: int | None = None
    score_direction: str = SCORE_DIRECTION

    def __post_init__(self) -> None:
        if self.protocol_version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {self.protocol_version!r}")
        if self.input_policy not in INPUT_POLICIES:
            raise ProtocolError(f"unknown input_policy {self.input_policy!r}")
        if (self.input_size is None) != (self.input_policy == "none"):
            raise ProtocolError("input_size must be present iff input_policy is not 'none'")
        if self.input_size is not None and self.input_size < 1:
            raise ProtocolError(f"input_size must be >= 1, got {self.input_size}")
        if self.score_direction != SCORE_DIRECTION:
            raise ProtocolError(f"unsupported score_direction {self.score_direction!r}")

    @property
    def detector_id(self) -> str:
        return f"{self.name}+{self.version}"

    def hello_ack_obj(self) -> dict:
        obj = {
            "type": "hello_ack",
            "name": self.name,
            "version": self.version,
            "protocol_version": self.protocol_version,
            "input_policy": self.input_policy,
        }
        if self.input_size is not None:
            obj["input_size"] = self.input_size
        obj["score_direction"] = self.score_direction
        return obj

    @classmethod
    def from_hello_ack(cls, obj: dict) -> "DetectorDescriptor":
        for key in ("name", "version", "protocol_version", "input_policy", "score_direction"):
            if key not in obj:
                raise HandshakeError(f"hello_ack missing field {key!r}")
        try:
            return cls(
                name=str(obj["name"]),
                version=str(obj["version"]),
                protocol_version=int(obj["protocol_version"]),
                input_policy=str(obj["input_policy"]),
                input_size=int(obj["input_size"]) if obj.get("input_size") is not None else None,
                score_direction=str(obj["score_direction"]),
            )
        except ProtocolError as exc:
            raise HandshakeError(str(exc)) from None


@dataclass(frozen=True)
class ScoreItem:
    id: str
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ProtocolError(f"non-finite score for id {self.id!r}")


def dump_message(obj: dict) -> str:
    """Compact single-line serialization; field order is the dict order."""
    line = json.dumps(obj, separators=(",", ":"), ensure_ascii=False)
    if "\n" in line:
        raise ProtocolError("protocol message must be a single line")
    return line + "\n"


def hello_message() -> dict:
    return {"type": "hello", "protocol_version": PROTOCOL_VERSION}


def score_message(batch_id: int, items: list[tuple[str, str]], preprocessed: bool = False) -> dict:
    obj: dict = {"type": "score", "batch_id": batch_id}
    if preprocessed:
        obj["preprocessed"] = True
    obj["items"] = [{"id": i, "path": p} for i, p in items]
    return obj


def shutdown_message() -> dict:
    return {"type": "shutdown"}


def error_message(message: str) -> dict:
    return {"type": "error", "message": message}


class _LineReader:
    """Background reader so stream reads can time out."""

    def __init__(self, stream):
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream) -> None:
        try:
            for line in stream:
                self._queue.put(line)
        except ValueError:
            pass  # stream closed underneath us
        finally:
            self._queue.put(None)

    def read_line(self, timeout: float) -> str | None:
        """A line, or None at EOF; raises ProtocolTimeout."""
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolTimeout(f"no reply within {timeout:g}s") from None


class _StderrTail:
    def __init__(self, stream):
        self._lines: deque[str] = deque(maxlen=_STDERR_TAIL_LINES)
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream) -> None:
        try:
            for line in stream:
                with self._lock:
                    self._lines.append(line.rstrip("\n"))
        except ValueError:
            pass

    def tail(self) -> str:
        with self._lock:
            return "\n".join(self._lines)


class DetectorSession:
    """Owns one detector child process and its protocol conversation.

    Sessions are synchronous: one in-flight batch at a time. A session is
    owned by a single orchestration worker; concurrency comes from running
    several sessions, one per detector.
    """

    def __init__(self, command: str | list[str], timeout_secs: float = DEFAULT_TIMEOUT_SECS):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        env = dict(os.environ)
        env[PROTOCOL_ENV] = "1"
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                env=env,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start detector {argv[0]!r}: {exc}") from None
        self.command = argv
        self.timeout_secs = timeout_secs
        self._stdout = _LineReader(self._proc.stdout)
        self._stderr = _StderrTail(self._proc.stderr)
        self._batch_counter = 0
        self._shut_down = False
        self.descriptor: DetectorDescriptor | None = None

    # -- low-level I/O ------------------------------------------------------

    def _send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(dump_message(obj))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise DetectorExited(self._exit_summary("detector closed its input")) from None

    def _receive(self, timeout: float | None = None) -> dict:
        line = self._stdout.read_line(timeout if timeout is not None else self.timeout_secs)
        if line is None:
            raise DetectorExited(self._exit_summary("detector exited"))
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed reply (not JSON): {line.strip()!r}") from None
        if not isinstance(obj, dict) or "type" not in obj:
            raise ProtocolError(f"malformed reply (no type): {line.strip()!r}")
        return obj

    def _exit_summary(self, what: str) -> str:
        code = self._proc.poll()
        tail = self._stderr.tail()
        msg = f"{what} (exit code {code})"
        if tail:
            msg += f"; stderr tail:\n{tail}"
        return msg

    # -- protocol operations -------------------------------------------------

    def handshake(self) -> DetectorDescriptor:
        self._send(hello_message())
        reply = self._receive()
        if reply.get("type") == "error":
            raise HandshakeError(f"detector error during handshake: {reply.get('message')}")
        if reply.get("type") != "hello_ack":
            raise HandshakeError(f"expected hello_ack, got {reply.get('type')!r}")
        if reply.get("protocol_version") != PROTOCOL_VERSION:
            raise HandshakeError(f"unsupported protocol version {reply.get('protocol_version')!r}")
        self.descriptor = DetectorDescriptor.from_hello_ack(reply)
        return self.descriptor

    def score_batch(
        self, items: list[tuple[str, str]], preprocessed: bool = False
    ) -> list[ScoreItem]:
        """Score (id, path) items; the reply is re-aligned to request order."""
        if self.descriptor is None:
            raise ProtocolError("score_batch before handshake")
        ids = [i for i, _ in items]
        if len(set(ids)) != len(ids):
            raise ProtocolError("duplicate ids in request batch")
        self._batch_counter += 1
        batch_id = self._batch_counter
        self._send(score_message(batch_id, items, preprocessed=preprocessed))
        reply = self._receive()
        if reply.get("type") == "error":
            raise ProtocolError(f"detector error: {reply.get('message')}")
        if reply.get("type") != "scores":
            raise ProtocolError(f"expected scores, got {reply.get('type')!r}")
        if reply.get("batch_id") != batch_id:
            raise ProtocolError(
                f"batch_id mismatch: sent {batch_id}, got {reply.get('batch_id')!r}"
            )
        raw = reply.get("scores")
        if not isinstance(raw, list):
            raise ProtocolError("malformed scores reply: 'scores' is not a list")
        by_id: dict[str, float] = {}
        for entry in raw:
            if not isinstance(entry, dict) or "id" not in entry or "score" not in entry:
                raise ProtocolError(f"malformed score entry: {entry!r}")
            sid = str(entry["id"])
            if sid in by_id:
                raise ProtocolError(f"duplicate score for id {sid!r}")
            try:
                value = float(entry["score"])
            except (TypeError, ValueError):
                raise ProtocolError(f"non-numeric score for id {sid!r}") from None
            if not math.isfinite(value):
                raise ProtocolError(f"non-finite score for id {sid!r}")
            by_id[sid] = value
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise ProtocolError(f"reply missing score for id {missing[0]!r}")
        extra = set(by_id) - set(ids)
        if extra:
            raise ProtocolError(f"reply has score for unknown id {sorted(extra)[0]!r}")
        return [ScoreItem(id=i, score=by_id[i]) for i in ids]

    def shutdown(self) -> int | None:
        """Ask the detector to exit; force-terminate after a grace period.

        Idempotent; never raises. Returns the exit code when known.
        """
        if self._shut_down:
            return self._proc.poll()
        self._shut_down = True
        try:
            self._send(shutdown_message())
        except ProtocolError:
            pass
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=SHUTDOWN_GRACE_SECS)
        except subprocess.TimeoutExpired:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=SHUTDOWN_GRACE_SECS)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        return self._proc.poll()

    def __enter__(self) -> "DetectorSession":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def open_session(
    command: str | list[str], timeout_secs: float = DEFAULT_TIMEOUT_SECS
) -> DetectorSession:
    """Start a detector process and complete the handshake."""
    session = DetectorSession(command, timeout_secs=timeout_secs)
    try:
        session.handshake()
    except ProtocolError:
        session.shutdown()
        raise
    return session
