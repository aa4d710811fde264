from __future__ import annotations

import io
import json

from PIL import Image

from conftest import write_image
from sidbench_adapters.serve import serve
from sidbench_adapters.wire import AdapterDescriptor


def run_loop(descriptor, score_fn, requests: list[dict]) -> list[dict]:
    stdin = io.StringIO("".join(json.dumps(r) + "\n" for r in requests))
    stdout = io.StringIO()
    code = serve(descriptor, score_fn, stdin=stdin, stdout=stdout)
    assert code == 0
    return [json.loads(line) for line in stdout.getvalue().splitlines()]


HELLO = {"type": "hello", "protocol_version": 1}
SHUTDOWN = {"type": "shutdown"}


def score_request(paths, preprocessed=False, batch_id=1):
    req = {
        "type": "score",
        "batch_id": batch_id,
        "items": [{"id": f"i{n}", "path": str(p)} for n, p in enumerate(paths)],
    }
    if preprocessed:
        req["preprocessed"] = True
    return req


class TestServeLoop:
    descriptor = AdapterDescriptor(name="probe", version="1")

    def test_hello_score_shutdown(self, image_256):
        replies = run_loop(
            self.descriptor, lambda p: 0.25, [HELLO, score_request([image_256]), SHUTDOWN]
        )
        assert replies[0]["type"] == "hello_ack"
        assert replies[1] == {
            "type": "scores",
            "batch_id": 1,
            "scores": [{"id": "i0", "score": 0.25}],
        }

    def test_scoring_failure_names_batch_and_keeps_serving(self, image_256):
        calls = {"n": 0}

        def flaky(path):
            calls["n"] += 1
            if calls["n"] == 1:
                raise RuntimeError("model exploded")
            return 0.5

        replies = run_loop(
            self.descriptor,
            flaky,
            [HELLO, score_request([image_256], batch_id=5), score_request([image_256], batch_id=6), SHUTDOWN],
        )
        assert replies[1]["type"] == "error"
        assert "batch 5" in replies[1]["message"]
        assert replies[2]["type"] == "scores" and replies[2]["batch_id"] == 6

    def test_malformed_request_gets_error_line(self, image_256):
        stdin = io.StringIO("not json at all\n" + json.dumps(SHUTDOWN) + "\n")
        stdout = io.StringIO()
        serve(self.descriptor, lambda p: 0.5, stdin=stdin, stdout=stdout)
        reply = json.loads(stdout.getvalue().splitlines()[0])
        assert reply["type"] == "error"

    def test_unknown_type_gets_error_line(self):
        replies = run_loop(self.descriptor, lambda p: 0.5, [{"type": "mystery"}, SHUTDOWN])
        assert replies[0]["type"] == "error"

    def test_wrong_hello_version_rejected(self):
        replies = run_loop(
            self.descriptor, lambda p: 0.5, [{"type": "hello", "protocol_version": 9}, SHUTDOWN]
        )
        assert replies[0]["type"] == "error"
        assert "protocol version" in replies[0]["message"]

    def test_non_finite_model_output_reported(self, image_256):
        replies = run_loop(
            self.descriptor, lambda p: float("nan"), [HELLO, score_request([image_256]), SHUTDOWN]
        )
        assert replies[1]["type"] == "error"
        assert "non-finite" in replies[1]["message"]


class TestInputPolicy:
    def width_probe(self, path):
        with Image.open(path) as im:
            return float(im.size[0])

    def test_policy_applied_before_scoring(self, tmp_path):
        img = write_image(tmp_path / "big.png", size=64)
        d = AdapterDescriptor(name="p", version="1", input_policy="resize", input_size=16)
        replies = run_loop(d, self.width_probe, [HELLO, score_request([img]), SHUTDOWN])
        assert replies[1]["scores"][0]["score"] == 16.0

    def test_center_crop_policy(self, tmp_path):
        img = write_image(tmp_path / "big.png", size=64)
        d = AdapterDescriptor(name="p", version="1", input_policy="center_crop", input_size=20)
        replies = run_loop(d, self.width_probe, [HELLO, score_request([img]), SHUTDOWN])
        assert replies[1]["scores"][0]["score"] == 20.0

    def test_preprocessed_flag_skips_policy(self, tmp_path):
        img = write_image(tmp_path / "big.png", size=64)
        d = AdapterDescriptor(name="p", version="1", input_policy="resize", input_size=16)
        replies = run_loop(
            d, self.width_probe, [HELLO, score_request([img], preprocessed=True), SHUTDOWN]
        )
        assert replies[1]["scores"][0]["score"] == 64.0

    def test_crop_beyond_bounds_is_batch_error(self, tmp_path):
        img = write_image(tmp_path / "small.png", size=8)
        d = AdapterDescriptor(name="p", version="1", input_policy="center_crop", input_size=224)
        replies = run_loop(d, self.width_probe, [HELLO, score_request([img]), SHUTDOWN])
        assert replies[1]["type"] == "error"
        assert "exceeds bounds" in replies[1]["message"]
