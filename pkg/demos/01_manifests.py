"""Build, parse, and validate a dataset manifest.

A manifest is a JSONL file: one header line, then one record per image with
a binary label and generator/family taxonomy. Paths are relative to the
corpus root, so the whole corpus directory can be moved freely.
"""

import tempfile
from pathlib import Path

import numpy as np

from sidbench.imaging import save_png
from sidbench.manifest import (
    DatasetManifest,
    ImageRecord,
    group_by_family,
    load_manifest,
    save_manifest,
    validate_files,
)

root = Path(tempfile.mkdtemp(prefix="manifest-demo-"))
rng = np.random.default_rng(0)

(root / "images").mkdir(parents=True)
records = []
for i in range(6):
    fake = i % 2 == 1
    rel = f"images/{i:02d}.png"
    save_png(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8), root / rel)
    records.append(
        ImageRecord(
            path=rel,
            label="fake" if fake else "real",
            generator="progan" if fake else "none",
            family="uncond-gan" if fake else "real",
            source="LSUN",
        )
    )

manifest = DatasetManifest(name="walkthrough", root=root, records=tuple(records))
save_manifest(manifest, root / "manifest.jsonl")
print(f"wrote {root / 'manifest.jsonl'}")
print((root / "manifest.jsonl").read_text().splitlines()[0])

loaded = load_manifest(root / "manifest.jsonl")
print(f"reloaded: {len(loaded)} records, {loaded.n_real} real / {loaded.n_fake} fake")

issues = validate_files(loaded)
print(f"validation issues: {issues or 'none'}")

# delete one file to show how issues are reported as data, not exceptions
(root / records[0].path).unlink()
for issue in validate_files(loaded):
    print(f"  after deleting one file -> {issue.path}: {issue.issue}")

print("families:")
for family, group in group_by_family(loaded).items():
    print(f"  {family}: {len(group)} records")
