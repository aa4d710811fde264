"""The detector wire protocol, exercised against a real child process.

Detectors are child processes speaking line-delimited JSON on stdin/stdout:
hello -> hello_ack, then score batches, then shutdown. Any language works;
here the harness's own builtin subprocess mode plays the detector role.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from sidbench.imaging import save_png
from sidbench.protocol import open_session

tmp = Path(tempfile.mkdtemp(prefix="protocol-demo-"))
rng = np.random.default_rng(2)
paths = []
for i in range(3):
    p = tmp / f"img_{i}.png"
    save_png(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8), p)
    paths.append(str(p))

command = [sys.executable, "-m", "sidbench", "serve-builtin", "builtin:random:seed=42"]
print(f"spawning detector: {' '.join(command)}")

with open_session(command) as session:
    d = session.descriptor
    print(f"hello_ack: name={d.name} version={d.version} policy={d.input_policy}")
    items = [(f"img{i}", p) for i, p in enumerate(paths)]
    scores = session.score_batch(items)
    for item in scores:
        print(f"  {item.id}: {item.score:.6f}")
    again = session.score_batch(items)
    print(f"re-scoring is deterministic: {[s.score for s in again] == [s.score for s in scores]}")
exit_code = session.shutdown()
print(f"detector exited with code {exit_code}")
