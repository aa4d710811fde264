"""Image perturbation and preprocessing transforms with pinned semantics.

Images are numpy ``uint8`` arrays of shape ``(height, width, 3)`` in RGB,
row-major. Alpha channels are dropped at load time; all corpora are treated
as 8-bit.

Pinned transform semantics:

* ``gaussian_blur``: separable convolution per channel, kernel radius
  ``r = ceil(3 * sigma)``, weights ``exp(-k^2 / (2 sigma^2))`` normalized to
  sum 1, mirror-reflect edge handling (edge pixel not duplicated).
  ``sigma = 0`` is a byte-for-byte identity.
* ``jpeg_recompress``: baseline sequential JPEG, 4:2:0 chroma subsampling,
  standard base quantization tables scaled by the conventional quality
  mapping (see :func:`quantization_tables`), then decoded back to RGB.
* ``center_crop``: origin ``(floor((W-w)/2), floor((H-h)/2))``, exact copy.
* ``random_crop``: origin drawn uniformly from valid offsets with a
  splitmix64 generator (see :func:`crop_origin`); fully determined by the
  seed.
* ``resize``: bilinear interpolation with half-pixel-centered sampling.

Chains serialize canonically as specs joined by ``|``, each spec rendered
``kind:key=value[,key=value...]`` with keys sorted alphabetically and floats
in minimal decimal form, e.g. ``blur:sigma=2|jpeg:q=50``. The empty chain
has the canonical id ``identity``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IDENTITY_CHAIN_ID = "identity"


class TransformError(ValueError):
    """Raised for out-of-range parameters or out-of-bounds crops."""


# ---------------------------------------------------------------------------
# Pixel array helpers

def require_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise TransformError("image must be a uint8 array of shape (h, w, 3)")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise TransformError("image must be at least 1x1")
    return img


def load_image(path: Path | str) -> np.ndarray:
    """Decode a PNG/JPEG file to an RGB uint8 array (alpha dropped)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(img: np.ndarray, path: Path | str) -> None:
    require_image(img)
    Image.fromarray(img, "RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Gaussian blur

def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps over k in [-r, r], r = ceil(3 sigma)."""
    if sigma < 0:
        raise TransformError(f"sigma must be >= 0, got {sigma}")
    radius = math.ceil(3 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return w / w.sum()


def _reflect_pad(arr: np.ndarray, radius: int, axis: int) -> np.ndarray:
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    # a 1-sample axis has no reflection; constant extension is its limit
    mode = "reflect" if arr.shape[axis] > 1 else "edge"
    return np.pad(arr, pad, mode=mode)


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    padded = _reflect_pad(arr, radius, axis)
    out = np.zeros_like(arr)
    for i, w in enumerate(kernel):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(i, i + arr.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    require_image(img)
    if sigma < 0:
        raise TransformError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    kernel = gaussian_kernel(sigma)
    acc = img.astype(np.float64)
    acc = _convolve_axis(acc, kernel, axis=1)
    acc = _convolve_axis(acc, kernel, axis=0)
    return np.clip(np.rint(acc), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# JPEG re-compression

# ITU T.81 Annex K base quantization tables, row-major 8x8.
BASE_LUMA_QUANT = (
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
)
BASE_CHROMA_QUANT = (
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
)


def quantization_tables(quality: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Base tables scaled by the conventional quality mapping.

    ``scale = 5000 / Q`` (integer division, as the standard encoders compute
    it) for ``Q < 50``, else ``200 - 2 Q``; each entry becomes
    ``clamp(round(base * scale / 100), 1, 255)`` with round-half-up. At
    Q=50 the tables equal the base tables; at Q=100 every entry clamps to 1.
    """
    if not 1 <= quality <= 100:
        raise TransformError(f"quality must be in 1..100, got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality

    def scaled(base: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(min(max((b * scale + 50) // 100, 1), 255) for b in base)

    return scaled(BASE_LUMA_QUANT), scaled(BASE_CHROMA_QUANT)


def encode_jpeg(img: np.ndarray, quality: int) -> bytes:
    """Encode to baseline sequential JPEG with 4:2:0 subsampling."""
    require_image(img)
    if not 1 <= quality <= 100:
        raise TransformError(f"quality must be in 1..100, got {quality}")
    buf = io.BytesIO()
    Image.fromarray(img, "RGB").save(buf, format="JPEG", quality=quality, subsampling=2)
    return buf.getvalue()


def decode_jpeg(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def jpeg_recompress(img: np.ndarray, quality: int) -> np.ndarray:
    """One encode/decode round trip; dimensions are preserved."""
    return decode_jpeg(encode_jpeg(img, quality))


# ---------------------------------------------------------------------------
# Crops and resize

def center_crop(img: np.ndarray, w: int, h: int) -> np.ndarray:
    require_image(img)
    height, width = img.shape[:2]
    if w < 1 or h < 1:
        raise TransformError(f"crop size must be >= 1, got {w}x{h}")
    if w > width or h > height:
        raise TransformError(f"crop exceeds bounds: {w}x{h} from {width}x{height}")
    x0 = (width - w) // 2
    y0 = (height - h) // 2
    return img[y0 : y0 + h, x0 : x0 + w].copy()


_SM64_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _SM64_MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _SM64_MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _SM64_MASK
    return state, (z ^ (z >> 31))


class SplitMix64:
    """splitmix64 sequence with unbiased bounded draws via rejection."""

    def __init__(self, seed: int):
        self._state = seed & _SM64_MASK

    def next_u64(self) -> int:
        self._state, value = _splitmix64(self._state)
        return value

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            z = self.next_u64()
            if z < limit:
                return z % n


def crop_origin(width: int, height: int, w: int, h: int, seed: int) -> tuple[int, int]:
    """Deterministic uniform crop origin: x then y drawn with splitmix64."""
    rng = SplitMix64(seed)
    x0 = rng.below(width - w + 1)
    y0 = rng.below(height - h + 1)
    return x0, y0


def random_crop(img: np.ndarray, w: int, h: int, seed: int) -> np.ndarray:
    require_image(img)
    height, width = img.shape[:2]
    if w < 1 or h < 1:
        raise TransformError(f"crop size must be >= 1, got {w}x{h}")
    if w > width or h > height:
        raise TransformError(f"crop exceeds bounds: {w}x{h} from {width}x{height}")
    x0, y0 = crop_origin(width, height, w, h, seed)
    return img[y0 : y0 + h, x0 : x0 + w].copy()


def _sample_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    xs = np.clip(xs, 0.0, src - 1.0)
    lo = np.floor(xs).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    frac = xs - lo
    return lo, hi, frac


def resize(img: np.ndarray, w: int, h: int) -> np.ndarray:
    require_image(img)
    if w < 1 or h < 1:
        raise TransformError(f"resize target must be >= 1, got {w}x{h}")
    height, width = img.shape[:2]
    if (w, h) == (width, height):
        return img.copy()
    src = img.astype(np.float64)
    x0, x1, fx = _sample_coords(w, width)
    y0, y1, fy = _sample_coords(h, height)
    rows = src[:, x0, :] * (1.0 - fx)[None, :, None] + src[:, x1, :] * fx[None, :, None]
    out = rows[y0, :, :] * (1.0 - fy)[:, None, None] + rows[y1, :, :] * fy[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Transform specs and chains

_KIND_PARAMS = {
    "blur": {"sigma": float},
    "jpeg": {"q": int},
    "center_crop": {"w": int, "h": int},
    "random_crop": {"w": int, "h": int, "seed": int},
    "resize": {"w": int, "h": int},
}


def _render_value(value: float | int) -> str:
    if isinstance(value, bool):
        raise TransformError("boolean transform parameters are not supported")
    if isinstance(value, int):
        return str(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class TransformSpec:
    """One perturbation step: a kind plus validated, kind-specific params."""

    kind: str
    params: tuple[tuple[str, float | int], ...]

    @classmethod
    def make(cls, kind: str, **params: float | int) -> "TransformSpec":
        if kind not in _KIND_PARAMS:
            raise TransformError(f"unknown transform kind {kind!r}")
        expected = _KIND_PARAMS[kind]
        if set(params) != set(expected):
            raise TransformError(
                f"{kind} takes parameters {sorted(expected)}, got {sorted(params)}"
            )
        coerced = {k: expected[k](v) for k, v in params.items()}
        _validate_params(kind, coerced)
        return cls(kind=kind, params=tuple(sorted(coerced.items())))

    @property
    def param_dict(self) -> dict[str, float | int]:
        return dict(self.params)

    def render(self) -> str:
        args = ",".join(f"{k}={_render_value(v)}" for k, v in self.params)
        return f"{self.kind}:{args}"

    def apply(self, img: np.ndarray) -> np.ndarray:
        p = self.param_dict
        if self.kind == "blur":
            return gaussian_blur(img, p["sigma"])
        if self.kind == "jpeg":
            return jpeg_recompress(img, p["q"])
        if self.kind == "center_crop":
            return center_crop(img, p["w"], p["h"])
        if self.kind == "random_crop":
            return random_crop(img, p["w"], p["h"], p["seed"])
        if self.kind == "resize":
            return resize(img, p["w"], p["h"])
        raise TransformError(f"unknown transform kind {self.kind!r}")


def _validate_params(kind: str, p: dict[str, float | int]) -> None:
    if kind == "blur" and p["sigma"] < 0:
        raise TransformError(f"blur sigma must be >= 0, got {p['sigma']}")
    if kind == "jpeg" and not 1 <= p["q"] <= 100:
        raise TransformError(f"jpeg quality must be in 1..100, got {p['q']}")
    if kind in ("center_crop", "random_crop", "resize") and (p["w"] < 1 or p["h"] < 1):
        raise TransformError(f"{kind} target must be >= 1, got {p['w']}x{p['h']}")
    if kind == "random_crop" and not 0 <= p["seed"] < (1 << 64):
        raise TransformError(f"random_crop seed must be an unsigned 64-bit int, got {p['seed']}")


@dataclass(frozen=True)
class TransformChain:
    """An ordered transform sequence; ``id`` is the canonical serialization."""

    specs: tuple[TransformSpec, ...] = ()

    @property
    def id(self) -> str:
        if not self.specs:
            return IDENTITY_CHAIN_ID
        return "|".join(spec.render() for spec in self.specs)

    @classmethod
    def parse(cls, text: str) -> "TransformChain":
        text = text.strip()
        if text in ("", IDENTITY_CHAIN_ID):
            return cls()
        specs = []
        for part in text.split("|"):
            if ":" not in part:
                raise TransformError(f"malformed transform spec {part!r}")
            kind, _, args = part.partition(":")
            params: dict[str, float | int] = {}
            for kv in args.split(","):
                if "=" not in kv:
                    raise TransformError(f"malformed parameter {kv!r} in {part!r}")
                key, _, value = kv.partition("=")
                expected = _KIND_PARAMS.get(kind, {})
                if key not in expected:
                    raise TransformError(f"unknown parameter {key!r} for {kind!r}")
                try:
                    params[key] = expected[key](value)
                except ValueError:
                    raise TransformError(f"bad value {value!r} for {kind}.{key}") from None
            specs.append(TransformSpec.make(kind, **params))
        return cls(specs=tuple(specs))

    def apply(self, img: np.ndarray) -> np.ndarray:
        """Apply transforms left to right; the empty chain is the identity."""
        require_image(img)
        if not self.specs:
            return img.copy()
        out = img
        for spec in self.specs:
            out = spec.apply(out)
        return out

    def __bool__(self) -> bool:
        return bool(self.specs)


def apply_chain(img: np.ndarray, chain: TransformChain) -> np.ndarray:
    return chain.apply(img)
