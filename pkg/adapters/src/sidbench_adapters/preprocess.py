"""Input-policy preprocessing applied on the adapter side.

The harness sends original (possibly perturbed) files; unless a request is
flagged ``"preprocessed":true``, the adapter is responsible for its model's
declared input policy: a square center crop or a square bilinear resize to
the declared input size. Model-specific tensor conversion and normalization
live with each model wrapper, not here.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from PIL import Image


def load_rgb(path: str | Path) -> Image.Image:
    with Image.open(path) as im:
        return im.convert("RGB")


def center_crop(im: Image.Image, size: int) -> Image.Image:
    w, h = im.size
    if size > w or size > h:
        raise ValueError(f"crop exceeds bounds: {size}x{size} from {w}x{h}")
    x0 = (w - size) // 2
    y0 = (h - size) // 2
    return im.crop((x0, y0, x0 + size, y0 + size))


def resize(im: Image.Image, size: int) -> Image.Image:
    return im.resize((size, size), Image.BILINEAR)


def apply_input_policy(path: str, policy: str, size: int | None, workdir: Path) -> str:
    """Materialize the policy-preprocessed image; returns the path to score.

    Policy "none" returns the input path untouched.
    """
    if policy == "none":
        return path
    im = load_rgb(path)
    im = center_crop(im, size) if policy == "center_crop" else resize(im, size)
    fd = tempfile.NamedTemporaryFile(
        dir=workdir, prefix="preprocessed-", suffix=".png", delete=False
    )
    with fd:
        im.save(fd, format="PNG")
    return fd.name
