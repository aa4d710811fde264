"""Perturbation chains: blur, JPEG re-compression, crops, and resize.

Chains serialize to canonical ids like ``blur:sigma=2|jpeg:q=50``, which is
also how they are addressed in run caches and reports. The robustness grid
used by ``sidbench sweep`` is sigma in {2, 4} and JPEG quality in
{95, 90, 50, 30}, plus the untouched originals.
"""

import numpy as np

from sidbench.imaging import (
    TransformChain,
    apply_chain,
    center_crop,
    gaussian_blur,
    jpeg_recompress,
    quantization_tables,
    random_crop,
    resize,
)

rng = np.random.default_rng(1)

# a soft gradient with texture, stand-in for a photograph
ys, xs = np.mgrid[0:256, 0:256] / 255.0
img = np.stack([xs * 200 + 30, ys * 180 + 40, (xs + ys) * 100 + 20], axis=-1)
img = np.clip(img + rng.normal(0, 6, img.shape), 0, 255).astype(np.uint8)

print("single transforms:")
for label, out in [
    ("blur sigma=2", gaussian_blur(img, 2.0)),
    ("jpeg q=30", jpeg_recompress(img, 30)),
    ("center crop 224", center_crop(img, 224, 224)),
    ("random crop 224 (seed 7)", random_crop(img, 224, 224, seed=7)),
    ("resize 224", resize(img, 224, 224)),
]:
    mae = "-" if out.shape != img.shape else f"{np.abs(out.astype(float) - img).mean():6.2f}"
    print(f"  {label:26s} shape={out.shape}  MAE vs original: {mae}")

print("\nJPEG quantization tables scale with quality (first luma row):")
for q in (95, 50, 30):
    luma, _ = quantization_tables(q)
    print(f"  q={q:3d}: {luma[:8]}")

chain = TransformChain.parse("blur:sigma=2|jpeg:q=50")
print(f"\nchain id: {chain.id}")
combined = apply_chain(img, chain)
manual = jpeg_recompress(gaussian_blur(img, 2.0), 50)
print(f"chain equals manual composition: {np.array_equal(combined, manual)}")

swapped = apply_chain(img, TransformChain.parse("jpeg:q=50|blur:sigma=2"))
print(f"order matters (bytes differ when swapped): {not np.array_equal(combined, swapped)}")
