"""The adapter-side request loop: hello, score batches, shutdown.

``score_fn(path) -> float`` is the only model-facing surface. A failure
while scoring a batch produces an error line naming the batch and the loop
keeps serving; malformed requests likewise get an error line rather than
killing the process.
"""

from __future__ import annotations

import json
import math
import sys
import tempfile
from pathlib import Path

from .preprocess import apply_input_policy
from .wire import AdapterDescriptor, dump_line, error_obj, scores_obj


def serve(descriptor: AdapterDescriptor, score_fn, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    workdir = Path(tempfile.mkdtemp(prefix="sidbench-adapter-"))

    def emit(obj: dict) -> None:
        stdout.write(dump_line(obj))
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            emit(error_obj("malformed request: not JSON"))
            continue
        if not isinstance(req, dict):
            emit(error_obj("malformed request: not an object"))
            continue
        kind = req.get("type")
        if kind == "hello":
            if req.get("protocol_version") != descriptor.protocol_version:
                emit(error_obj(f"unsupported protocol version {req.get('protocol_version')!r}"))
                continue
            emit(descriptor.hello_ack_obj())
        elif kind == "score":
            batch_id = req.get("batch_id")
            items = req.get("items")
            if not isinstance(items, list):
                emit(error_obj("malformed score request: 'items' is not a list"))
                continue
            preprocessed = bool(req.get("preprocessed", False))
            try:
                out = []
                for item in items:
                    path = str(item["path"])
                    if not preprocessed:
                        path = apply_input_policy(
                            path, descriptor.input_policy, descriptor.input_size, workdir
                        )
                    value = float(score_fn(path))
                    if not math.isfinite(value):
                        raise ValueError(f"model produced a non-finite score for {item['id']!r}")
                    out.append((str(item["id"]), value))
            except Exception as exc:
                emit(error_obj(f"scoring failed for batch {batch_id!r}: {exc}"))
                continue
            emit(scores_obj(batch_id, out))
        elif kind == "shutdown":
            return 0
        else:
            emit(error_obj(f"unknown message type {kind!r}"))
    return 0
