"""In-process reference detectors (no ML) for exercising the full harness.

Spec strings select and parameterize a detector:

* ``builtin:constant:v=0.5`` -- always returns ``v``.
* ``builtin:random:seed=42`` -- uniform [0, 1) keyed by (seed, pixel hash):
  the score is the first 8 bytes of ``sha256(seed_le64 || sha256(pixels))``
  read little-endian, divided by 2**64. Stable across runs and orderings.
* ``builtin:label_leak`` -- 1.0 for fake and 0.0 for real, looked up from
  the manifest by record id (an upper-bound oracle).
* ``builtin:highfreq:cutoff=0.5,scale=8`` -- fraction of spectral energy
  above the cutoff radius, through a logistic squash. A toy stand-in for
  frequency-fingerprint detectors, not a reproduction of any trained model.

All built-ins score images deterministically and are safe to call
concurrently.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .imaging import load_image, require_image
from .manifest import DatasetManifest
from .protocol import DetectorDescriptor

# Fixed reference level for the highfreq logistic squash: the energy
# fraction treated as "neutral". A plumbing baseline, not a fitted value.
HIGHFREQ_REFERENCE_FRACTION = 0.15

BUILTIN_PREFIX = "builtin:"


class BuiltinSpecError(ValueError):
    """Raised for malformed builtin detector spec strings."""


def _render_float(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(v)


class ConstantDetector:
    """Always scores ``value``; input pixels are ignored."""

    def __init__(self, value: float):
        self.value = float(value)

    @property
    def spec(self) -> str:
        return f"builtin:constant:v={_render_float(self.value)}"

    def score(self, img: np.ndarray) -> float:
        return self.value

    def score_path(self, path) -> float:
        load_image(path)
        return self.value


class RandomDetector:
    """Deterministic pseudo-random scores keyed by (seed, image content)."""

    def __init__(self, seed: int):
        if not 0 <= seed < (1 << 64):
            raise BuiltinSpecError(f"seed must be an unsigned 64-bit int, got {seed}")
        self.seed = int(seed)

    @property
    def spec(self) -> str:
        return f"builtin:random:seed={self.seed}"

    def score(self, img: np.ndarray) -> float:
        require_image(img)
        content = hashlib.sha256(np.ascontiguousarray(img).tobytes()).digest()
        keyed = hashlib.sha256(struct.pack("<Q", self.seed) + content).digest()
        return struct.unpack("<Q", keyed[:8])[0] / float(1 << 64)

    def score_path(self, path) -> float:
        return self.score(load_image(path))


class LabelLeakDetector:
    """Scores 1.0 for fake and 0.0 for real via manifest lookup by id."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._labels = {rec.path: rec.label for rec in manifest.records}

    @property
    def spec(self) -> str:
        return "builtin:label_leak"

    def score_id(self, record_id: str) -> float:
        if record_id not in self._labels:
            raise KeyError(f"unknown record {record_id!r}")
        return 1.0 if self._labels[record_id] == "fake" else 0.0


class HighFreqDetector:
    """Fraction of 2-D spectral energy above a normalized cutoff radius.

    Per channel, energy is the squared DFT magnitude; frequencies come from
    the standard FFT grid in cycles/pixel, and the radius is
    ``sqrt(fx^2 + fy^2) / (0.5 * sqrt(2))`` so it spans [0, 1]. The energy
    fraction strictly above the cutoff is averaged over channels and mapped
    through ``logistic(scale * (fraction - reference))``.
    """

    def __init__(self, cutoff: float, scale: float):
        if not 0 <= cutoff <= 1:
            raise BuiltinSpecError(f"cutoff must be in 0..1, got {cutoff}")
        self.cutoff = float(cutoff)
        self.scale = float(scale)

    @property
    def spec(self) -> str:
        return f"builtin:highfreq:cutoff={_render_float(self.cutoff)},scale={_render_float(self.scale)}"

    def energy_fraction(self, img: np.ndarray) -> float:
        require_image(img)
        h, w = img.shape[:2]
        if h < 8 or w < 8:
            raise ValueError(f"image too small for spectral scoring: {w}x{h} (need >= 8x8)")
        fy = np.fft.fftfreq(h)[:, None]
        fx = np.fft.fftfreq(w)[None, :]
        radius = np.sqrt(fx * fx + fy * fy) / (0.5 * math.sqrt(2.0))
        above = radius > self.cutoff
        fractions = []
        for c in range(3):
            spectrum = np.fft.fft2(img[:, :, c].astype(np.float64))
            energy = np.abs(spectrum) ** 2
            total = energy.sum()
            fractions.append(float(energy[above].sum() / total) if total > 0 else 0.0)
        return float(np.mean(fractions))

    def score(self, img: np.ndarray) -> float:
        x = self.scale * (self.energy_fraction(img) - HIGHFREQ_REFERENCE_FRACTION)
        return 1.0 / (1.0 + math.exp(-x))

    def score_path(self, path) -> float:
        return self.score(load_image(path))


@dataclass(frozen=True)
class BuiltinSpec:
    kind: str
    params: tuple[tuple[str, float], ...]

    @property
    def canonical(self) -> str:
        if not self.params:
            return f"builtin:{self.kind}"
        args = ",".join(f"{k}={_render_float(v)}" for k, v in self.params)
        return f"builtin:{self.kind}:{args}"


_PARAM_NAMES = {
    "constant": ("v",),
    "random": ("seed",),
    "label_leak": (),
    "highfreq": ("cutoff", "scale"),
}


def parse_builtin_spec(spec: str) -> BuiltinSpec:
    if not spec.startswith(BUILTIN_PREFIX):
        raise BuiltinSpecError(f"not a builtin detector spec: {spec!r}")
    body = spec[len(BUILTIN_PREFIX):]
    kind, _, args = body.partition(":")
    if kind not in _PARAM_NAMES:
        raise BuiltinSpecError(f"unknown builtin detector {kind!r}")
    expected = _PARAM_NAMES[kind]
    params: dict[str, float] = {}
    if args:
        for kv in args.split(","):
            key, sep, value = kv.partition("=")
            if not sep or key not in expected:
                raise BuiltinSpecError(f"bad parameter {kv!r} for builtin {kind!r}")
            try:
                params[key] = float(value)
            except ValueError:
                raise BuiltinSpecError(f"bad value {value!r} for {kind}.{key}") from None
    missing = set(expected) - set(params)
    if missing:
        raise BuiltinSpecError(f"builtin {kind!r} missing parameters {sorted(missing)}")
    return BuiltinSpec(kind=kind, params=tuple(sorted(params.items())))


def is_builtin(spec: str) -> bool:
    return spec.startswith(BUILTIN_PREFIX)


def make_detector(spec: BuiltinSpec | str, manifest: DatasetManifest | None = None):
    """Instantiate a builtin detector; label_leak needs the manifest."""
    if isinstance(spec, str):
        spec = parse_builtin_spec(spec)
    p = dict(spec.params)
    if spec.kind == "constant":
        return ConstantDetector(p["v"])
    if spec.kind == "random":
        return RandomDetector(int(p["seed"]))
    if spec.kind == "highfreq":
        return HighFreqDetector(p["cutoff"], p["scale"])
    if spec.kind == "label_leak":
        if manifest is None:
            raise BuiltinSpecError("label_leak requires a manifest to look labels up in")
        return LabelLeakDetector(manifest)
    raise BuiltinSpecError(f"unknown builtin detector {spec.kind!r}")


def builtin_descriptor(spec: BuiltinSpec | str) -> DetectorDescriptor:
    if isinstance(spec, str):
        spec = parse_builtin_spec(spec)
    return DetectorDescriptor(
        name=spec.canonical,
        version="1",
        protocol_version=1,
        input_policy="none",
        input_size=None,
        score_direction="higher_is_fake",
    )
