from __future__ import annotations

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sidbench.imaging import save_png
from sidbench.protocol import (
    DetectorDescriptor,
    DetectorExited,
    HandshakeError,
    ProtocolError,
    ProtocolTimeout,
    dump_message,
    hello_message,
    open_session,
    score_message,
)

HELPERS = Path(__file__).parent / "helpers"
DATA = Path(__file__).parent / "data"

FAULTY = [sys.executable, str(HELPERS / "misbehaving_detector.py")]


def faulty_session(mode: str, timeout: float = 2.0):
    return open_session(FAULTY + [mode], timeout_secs=timeout)


@pytest.fixture()
def image_pair(tmp_path):
    rng = np.random.default_rng(0)
    paths = []
    for name in ("img_a.png", "img_b.png"):
        p = tmp_path / name
        save_png(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8), p)
        paths.append(str(p))
    return paths


class TestDescriptor:
    def test_valid_ack_parses(self):
        d = DetectorDescriptor.from_hello_ack(
            {
                "type": "hello_ack",
                "name": "const",
                "version": "1",
                "protocol_version": 1,
                "input_policy": "none",
                "score_direction": "higher_is_fake",
            }
        )
        assert d.name == "const" and d.input_size is None

    def test_unsupported_version_rejected(self):
        with pytest.raises(HandshakeError, match="protocol version"):
            DetectorDescriptor.from_hello_ack(
                {
                    "type": "hello_ack",
                    "name": "x",
                    "version": "1",
                    "protocol_version": 2,
                    "input_policy": "none",
                    "score_direction": "higher_is_fake",
                }
            )

    def test_input_size_policy_coupling(self):
        with pytest.raises(ProtocolError, match="input_size"):
            DetectorDescriptor(name="x", version="1", input_policy="resize", input_size=None)
        with pytest.raises(ProtocolError, match="input_size"):
            DetectorDescriptor(name="x", version="1", input_policy="none", input_size=224)
        d = DetectorDescriptor(name="x", version="1", input_policy="resize", input_size=224)
        assert d.hello_ack_obj()["input_size"] == 224

    def test_messages_single_line(self):
        assert dump_message(hello_message()) == '{"type":"hello","protocol_version":1}\n'
        msg = dump_message(score_message(3, [("a", "p")], preprocessed=True))
        assert msg.count("\n") == 1 and msg.endswith("\n")
        assert '"preprocessed":true' in msg


class TestSession:
    def test_handshake_and_score(self, image_pair):
        with faulty_session("ok") as session:
            assert session.descriptor.name == "faulty"
            items = list(zip(["a", "b"], image_pair))
            scores = session.score_batch(items)
            assert [s.id for s in scores] == ["a", "b"]
            assert [s.score for s in scores] == [0.25, 0.25]

    def test_reply_realigned_by_id(self, image_pair):
        # the ok detector replies in request order; scramble request order
        with faulty_session("ok") as session:
            items = list(zip(["z", "a"], image_pair))
            scores = session.score_batch(items)
            assert [s.id for s in scores] == ["z", "a"]

    def test_shutdown_clean_exit_and_idempotent(self, image_pair):
        session = faulty_session("ok")
        code = session.shutdown()
        assert code == 0
        assert session.shutdown() == 0  # second call is a no-op

    def test_hung_detector_force_terminated(self, monkeypatch):
        import sidbench.protocol as protocol

        monkeypatch.setattr(protocol, "SHUTDOWN_GRACE_SECS", 0.3)
        session = faulty_session("hang-batch")
        start = time.monotonic()
        session.shutdown()
        assert time.monotonic() - start < 5.0
        assert session._proc.poll() is not None


class TestFaults:
    def test_missing_id(self, image_pair):
        with faulty_session("missing-id") as session:
            with pytest.raises(ProtocolError, match="missing score for id 'b'"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_extra_id(self, image_pair):
        with faulty_session("extra-id") as session:
            with pytest.raises(ProtocolError, match="unknown id 'uninvited'"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_duplicate_id(self, image_pair):
        with faulty_session("duplicate-id") as session:
            with pytest.raises(ProtocolError, match="duplicate score"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_nan_score(self, image_pair):
        with faulty_session("nan-score") as session:
            with pytest.raises(ProtocolError, match="non-finite score for id 'a'"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_batch_id_mismatch(self, image_pair):
        with faulty_session("wrong-batch-id") as session:
            with pytest.raises(ProtocolError, match="batch_id mismatch"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_exit_mid_batch_reports_stderr_tail(self, image_pair):
        with faulty_session("exit-mid-batch") as session:
            with pytest.raises(DetectorExited, match="exploding halfway"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_batch_timeout(self, image_pair):
        with faulty_session("hang-batch", timeout=0.5) as session:
            with pytest.raises(ProtocolTimeout):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_handshake_timeout(self, monkeypatch):
        import sidbench.protocol as protocol

        monkeypatch.setattr(protocol, "SHUTDOWN_GRACE_SECS", 0.3)
        start = time.monotonic()
        with pytest.raises(ProtocolTimeout):
            faulty_session("hang-handshake", timeout=0.5)
        assert time.monotonic() - start < 5.0

    def test_bad_protocol_version(self):
        with pytest.raises(HandshakeError, match="protocol version"):
            faulty_session("bad-version")

    def test_malformed_handshake(self):
        with pytest.raises(ProtocolError, match="not JSON"):
            faulty_session("malformed-handshake")

    def test_error_reply_surfaces_message(self, image_pair):
        with faulty_session("error-reply") as session:
            with pytest.raises(ProtocolError, match="kaput"):
                session.score_batch(list(zip(["a", "b"], image_pair)))

    def test_unstartable_command(self):
        with pytest.raises(ProtocolError, match="cannot start"):
            open_session(["/no/such/binary/anywhere"], timeout_secs=1.0)


class TestBuiltinSubprocessMode:
    def test_golden_transcript_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        for name in ("img_a.png", "img_b.png"):
            save_png(rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8), tmp_path / name)
        requests = (DATA / "golden_requests.jsonl").read_bytes()
        expected = (DATA / "golden_replies_constant.jsonl").read_bytes()
        proc = subprocess.run(
            [sys.executable, "-m", "sidbench", "serve-builtin", "constant:v=0.5"],
            input=requests,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=tmp_path,
            timeout=60,
        )
        assert proc.returncode == 0
        assert proc.stdout == expected

    def test_session_against_builtin_subprocess(self, image_pair):
        cmd = [sys.executable, "-m", "sidbench", "serve-builtin", "builtin:random:seed=42"]
        with open_session(cmd, timeout_secs=30.0) as session:
            assert session.descriptor.name == "builtin:random:seed=42"
            items = list(zip(["x", "y"], image_pair))
            first = session.score_batch(items)
            second = session.score_batch(items)
            assert [s.score for s in first] == [s.score for s in second]
            assert all(0.0 <= s.score < 1.0 for s in first)

    def test_label_leak_subprocess_requires_manifest(self):
        proc = subprocess.run(
            [sys.executable, "-m", "sidbench", "serve-builtin", "label_leak"],
            input=b"",
            capture_output=True,
            timeout=60,
        )
        assert proc.returncode == 3
        assert b"--manifest" in proc.stderr

    def test_label_leak_subprocess_scores_by_id(self, small_corpus, image_pair):
        from sidbench.manifest import load_manifest

        manifest = load_manifest(small_corpus)
        cmd = [
            sys.executable, "-m", "sidbench", "serve-builtin", "label_leak",
            "--manifest", str(small_corpus),
        ]
        with open_session(cmd, timeout_secs=30.0) as session:
            items = [(rec.path, str(manifest.resolve(rec))) for rec in manifest.records]
            scores = session.score_batch(items)
            for rec, item in zip(manifest.records, scores):
                assert item.score == (1.0 if rec.label == "fake" else 0.0)

    def test_scoring_failure_keeps_serving(self, tmp_path):
        # a missing file fails the batch with an error line, then the
        # detector still answers the next batch
        ok = tmp_path / "ok.png"
        save_png(np.zeros((8, 8, 3), dtype=np.uint8), ok)
        cmd = [sys.executable, "-m", "sidbench", "serve-builtin", "constant:v=0.5"]
        with open_session(cmd, timeout_secs=30.0) as session:
            with pytest.raises(ProtocolError, match="scoring failed"):
                session.score_batch([("gone", str(tmp_path / "gone.png"))])
            scores = session.score_batch([("ok", str(ok))])
            assert scores[0].score == 0.5
