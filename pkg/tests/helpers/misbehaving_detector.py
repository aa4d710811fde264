#!/usr/bin/env python3
"""A detector-side fault injector for protocol robustness tests.

Speaks just enough of the wire protocol to misbehave on demand; the fault
mode comes from argv. Deliberately free of any harness imports so it acts
like a foreign detector process.
"""

import json
import sys
import time

MODE = sys.argv[1] if len(sys.argv) > 1 else "ok"


def emit(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        kind = req.get("type")
        if kind == "hello":
            if MODE == "hang-handshake":
                time.sleep(3600)
            if MODE == "bad-version":
                emit({
                    "type": "hello_ack", "name": "faulty", "version": "1",
                    "protocol_version": 2, "input_policy": "none",
                    "score_direction": "higher_is_fake",
                })
                continue
            if MODE == "malformed-handshake":
                sys.stdout.write("this is not json\n")
                sys.stdout.flush()
                continue
            emit({
                "type": "hello_ack", "name": "faulty", "version": "1",
                "protocol_version": 1, "input_policy": "none",
                "score_direction": "higher_is_fake",
            })
        elif kind == "score":
            batch_id = req.get("batch_id")
            items = req.get("items", [])
            scores = [{"id": item["id"], "score": 0.25} for item in items]
            if MODE == "missing-id":
                scores = scores[:-1]
            elif MODE == "extra-id":
                scores.append({"id": "uninvited", "score": 0.5})
            elif MODE == "duplicate-id" and scores:
                scores.append(dict(scores[0]))
            elif MODE == "nan-score" and scores:
                scores[0]["score"] = float("nan")
            elif MODE == "wrong-batch-id":
                batch_id = (batch_id or 0) + 1000
            elif MODE == "exit-mid-batch":
                print("detector exploding halfway through the batch", file=sys.stderr)
                sys.exit(13)
            elif MODE == "hang-batch":
                time.sleep(3600)
            elif MODE == "error-reply":
                emit({"type": "error", "message": "kaput"})
                continue
            emit({"type": "scores", "batch_id": batch_id, "scores": scores})
        elif kind == "shutdown":
            return


if __name__ == "__main__":
    main()
