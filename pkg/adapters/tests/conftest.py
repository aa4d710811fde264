from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

DATA_DIR = Path(__file__).parent / "data"


def write_image(path: Path, size: int = 256, seed: int = 0) -> Path:
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path, format="PNG")
    return path


@pytest.fixture()
def image_256(tmp_path) -> Path:
    return write_image(tmp_path / "img_256.png", size=256)
