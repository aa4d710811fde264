"""Detector-side protocol loop for the builtin subprocess mode.

Lets the harness talk to its own built-in detectors through a real child
process, so the wire path can be exercised without any external adapter.
"""

from __future__ import annotations

import sys
from pathlib import Path

from .builtin_detectors import builtin_descriptor, make_detector, parse_builtin_spec
from .manifest import load_manifest
from .protocol import DetectorDescriptor, dump_message, error_message


def serve_lines(descriptor: DetectorDescriptor, score_fn, stdin, stdout) -> int:
    """Answer hello/score/shutdown on the given line streams.

    ``score_fn(id, path, preprocessed) -> float``. Malformed requests get an
    error line and the loop continues; a scoring failure inside a batch also
    produces an error line naming the batch.
    """
    import json

    def emit(obj: dict) -> None:
        stdout.write(dump_message(obj))
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            emit(error_message("malformed request: not JSON"))
            continue
        if not isinstance(req, dict):
            emit(error_message("malformed request: not an object"))
            continue
        kind = req.get("type")
        if kind == "hello":
            if req.get("protocol_version") != descriptor.protocol_version:
                emit(error_message(f"unsupported protocol version {req.get('protocol_version')!r}"))
                continue
            emit(descriptor.hello_ack_obj())
        elif kind == "score":
            batch_id = req.get("batch_id")
            items = req.get("items")
            preprocessed = bool(req.get("preprocessed", False))
            if not isinstance(items, list):
                emit(error_message("malformed score request: 'items' is not a list"))
                continue
            try:
                scores = [
                    {"id": str(item["id"]), "score": float(score_fn(str(item["id"]), str(item["path"]), preprocessed))}
                    for item in items
                ]
            except Exception as exc:  # scoring failure: report, keep serving
                emit(error_message(f"scoring failed for batch {batch_id!r}: {exc}"))
                continue
            emit({"type": "scores", "batch_id": batch_id, "scores": scores})
        elif kind == "shutdown":
            return 0
        else:
            emit(error_message(f"unknown message type {kind!r}"))
    return 0


def serve_builtin(spec_text: str, manifest_path: str | None = None) -> int:
    """Entry point for ``sidbench serve-builtin SPEC [--manifest PATH]``."""
    spec = parse_builtin_spec(spec_text if spec_text.startswith("builtin:") else f"builtin:{spec_text}")
    if spec.kind == "label_leak":
        if manifest_path is None:
            print("label_leak in subprocess mode requires --manifest", file=sys.stderr)
            return 3
        detector = make_detector(spec, manifest=load_manifest(Path(manifest_path)))

        def score_fn(record_id: str, path: str, preprocessed: bool) -> float:
            return detector.score_id(record_id)

    else:
        detector = make_detector(spec)

        def score_fn(record_id: str, path: str, preprocessed: bool) -> float:
            return detector.score_path(path)

    return serve_lines(builtin_descriptor(spec), score_fn, sys.stdin, sys.stdout)
