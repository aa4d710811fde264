"""Procedural demo corpus: a rights-free, self-contained labeled image set.

"Real" images are smooth two-color gradients with mild seeded noise; "fake"
images add a pixel-level checkerboard watermark, giving them the kind of
high-frequency energy the spectral built-in detector keys on. All bytes are
fully determined by the seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import save_png
from .manifest import DatasetManifest, ImageRecord, save_manifest

FAKE_GENERATOR = "checker-wm"
FAKE_FAMILY = "procedural"
SOURCE = "demo"


def make_image(rng: np.random.Generator, size: int, fake: bool) -> np.ndarray:
    xs = np.linspace(0.0, 1.0, size)[None, :]
    ys = np.linspace(0.0, 1.0, size)[:, None]
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xs + np.sin(angle) * ys
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
    c0 = rng.uniform(40, 215, size=3)
    c1 = rng.uniform(40, 215, size=3)
    base = ramp[:, :, None] * c0[None, None, :] + (1 - ramp[:, :, None]) * c1[None, None, :]
    base += rng.normal(0.0, 3.0, size=(size, size, 3))
    if fake:
        checker = ((np.indices((size, size)).sum(axis=0) % 2) * 2 - 1).astype(np.float64)
        base += 12.0 * checker[:, :, None]
    return np.clip(np.rint(base), 0, 255).astype(np.uint8)


def make_demo_corpus(
    out_dir: Path | str, n_images: int = 2000, size: int = 64, seed: int = 7
) -> Path:
    """Write a balanced corpus under ``out_dir``; returns the manifest path."""
    if n_images < 2 or n_images % 2 != 0:
        raise ValueError(f"n_images must be an even count >= 2, got {n_images}")
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records: list[ImageRecord] = []
    half = n_images // 2
    for i in range(n_images):
        fake = i >= half
        img = make_image(rng, size, fake)
        name = f"{'fake' if fake else 'real'}_{i % half:04d}.png"
        rel = f"images/{name}"
        save_png(img, out_dir / rel)
        records.append(
            ImageRecord(
                path=rel,
                label="fake" if fake else "real",
                generator=FAKE_GENERATOR if fake else "none",
                family=FAKE_FAMILY if fake else "real",
                source=SOURCE,
            )
        )
    manifest = DatasetManifest(name="demo-corpus", root=out_dir, records=tuple(records))
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(manifest, manifest_path)
    return manifest_path
