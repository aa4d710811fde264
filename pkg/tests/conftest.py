from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `oracles` and helpers

from sidbench.imaging import load_image, save_png
from sidbench.manifest import DatasetManifest, ImageRecord, save_manifest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def photo_256() -> np.ndarray:
    return load_image(DATA_DIR / "photo_256.png")


@pytest.fixture(scope="session")
def photo_odd() -> np.ndarray:
    return load_image(DATA_DIR / "photo_97x64.png")


def build_corpus(root: Path, n_real: int, n_fake: int, size: int = 32, seed: int = 5) -> Path:
    """A small labeled corpus of noise images; returns the manifest path."""
    rng = np.random.default_rng(seed)
    records = []
    (root / "img").mkdir(parents=True, exist_ok=True)
    for i in range(n_real + n_fake):
        fake = i >= n_real
        img = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        rel = f"img/{'f' if fake else 'r'}{i:03d}.png"
        save_png(np.asarray(img), root / rel)
        records.append(
            ImageRecord(
                path=rel,
                label="fake" if fake else "real",
                generator="toygen" if fake else "none",
                family="toy-family" if fake else "real",
                source="test",
            )
        )
    manifest = DatasetManifest(name=root.name, root=root, records=tuple(records))
    path = root / "manifest.jsonl"
    save_manifest(manifest, path)
    return path


@pytest.fixture()
def small_corpus(tmp_path: Path) -> Path:
    return build_corpus(tmp_path / "corpus", n_real=4, n_fake=4)
