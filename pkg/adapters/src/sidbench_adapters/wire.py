"""Detector-side view of the harness wire protocol.

One compact JSON object per newline-terminated line on stdin/stdout.
Emitted field order is fixed so conformance transcripts compare
byte-for-byte:

* ``hello_ack``: type, name, version, protocol_version, input_policy,
  input_size (only when the policy needs one), score_direction
* ``scores``:    type, batch_id, scores; each entry: id, score
* ``error``:     type, message

This module is self-contained on purpose: adapters depend on the wire
format, never on the harness package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

PROTOCOL_VERSION = 1
INPUT_POLICIES = ("none", "center_crop", "resize")
SCORE_DIRECTION = "higher_is_fake"


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterDescriptor:
    """What the adapter announces in its hello_ack, plus local run config."""

    name: str
    version: str
    input_policy: str = "none"
    input_size: int | None = None
    protocol_version: int = PROTOCOL_VERSION
    score_direction: str = SCORE_DIRECTION
    model_entrypoint: str = ""
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.protocol_version != PROTOCOL_VERSION:
            raise WireError(f"unsupported protocol version {self.protocol_version!r}")
        if self.input_policy not in INPUT_POLICIES:
            raise WireError(f"unknown input_policy {self.input_policy!r}")
        if (self.input_size is None) != (self.input_policy == "none"):
            raise WireError("input_size must be present iff input_policy is not 'none'")
        if self.score_direction != SCORE_DIRECTION:
            raise WireError(f"unsupported score_direction {self.score_direction!r}")

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


def dump_line(obj: dict) -> str:
    line = json.dumps(obj, separators=(",", ":"), ensure_ascii=False)
    if "\n" in line:
        raise WireError("wire message must serialize to a single line")
    return line + "\n"


def scores_obj(batch_id, scores: list[tuple[str, float]]) -> dict:
    return {
        "type": "scores",
        "batch_id": batch_id,
        "scores": [{"id": i, "score": s} for i, s in scores],
    }


def error_obj(message: str) -> dict:
    return {"type": "error", "message": message}
