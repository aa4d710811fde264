"""Model registry: the echo adapter and reference detector wrappers.

Reference wrappers load user-supplied weights from ``--weights``; nothing is
ever downloaded. An adapter whose weights are missing refuses to start with
a clear message. Scores follow the harness convention: higher means more
likely synthetic.

* ``echo`` -- returns a constant; the conformance counterpart of the
  harness's builtin constant detector.
* ``cnndetect`` -- a ResNet50 binary classifier scored as
  ``sigmoid(logit)``; input policy center_crop 224, ImageNet
  normalization. Weights: a torch state dict whose final ``fc`` maps to one
  output.
* ``clip-linear`` -- a linear head over a CLIP vision encoder's pooled
  output; input policy resize 224 (the ViT-L/14-style fixed input side),
  CLIP normalization. Weights: a directory with ``backbone/`` (a local
  transformers CLIPVisionModel) and ``head.pt`` (Linear state dict).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .wire import AdapterDescriptor

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class AdapterStartupError(RuntimeError):
    """Raised when an adapter cannot start (missing weights, bad device)."""


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    needs_weights: bool
    make_descriptor: Callable[..., AdapterDescriptor]
    load: Callable[..., Callable[[str], float]]


def _image_tensor(path: str, mean, std):
    import numpy as np
    import torch
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


# -- echo ---------------------------------------------------------------------

def _echo_descriptor(value: float, device: str) -> AdapterDescriptor:
    return AdapterDescriptor(
        name="echo",
        version="1",
        input_policy="none",
        model_entrypoint="echo",
        device=device,
    )


def _echo_load(weights: Path | None, device: str, value: float) -> Callable[[str], float]:
    value = float(value)

    def score(path: str) -> float:
        return value

    return score


# -- cnndetect-style ResNet50 --------------------------------------------------

def _cnndetect_descriptor(value: float, device: str) -> AdapterDescriptor:
    return AdapterDescriptor(
        name="cnndetect",
        version="1",
        input_policy="center_crop",
        input_size=224,
        model_entrypoint="cnndetect",
        device=device,
    )


def _cnndetect_load(weights: Path, device: str, value: float) -> Callable[[str], float]:
    try:
        import torch
        from torchvision.models import resnet50
    except ImportError as exc:
        raise AdapterStartupError(f"cnndetect needs torch+torchvision installed: {exc}") from None
    model = resnet50(weights=None)
    model.fc = torch.nn.Linear(model.fc.in_features, 1)
    try:
        state = torch.load(weights, map_location=device, weights_only=True)
    except Exception as exc:
        raise AdapterStartupError(f"cannot load weights {weights}: {exc}") from None
    model.load_state_dict(state)
    model.to(device).eval()

    def score(path: str) -> float:
        with torch.no_grad():
            logit = model(_image_tensor(path, IMAGENET_MEAN, IMAGENET_STD).to(device))
        return torch.sigmoid(logit.reshape(())).item()

    return score


# -- clip-linear-style ---------------------------------------------------------

def _clip_linear_descriptor(value: float, device: str) -> AdapterDescriptor:
    return AdapterDescriptor(
        name="clip-linear",
        version="1",
        input_policy="resize",
        input_size=224,
        model_entrypoint="clip-linear",
        device=device,
    )


def _clip_linear_load(weights: Path, device: str, value: float) -> Callable[[str], float]:
    try:
        import torch
        from transformers import CLIPVisionModel
    except ImportError as exc:
        raise AdapterStartupError(f"clip-linear needs torch+transformers installed: {exc}") from None
    backbone_dir = weights / "backbone"
    head_path = weights / "head.pt"
    if not backbone_dir.is_dir() or not head_path.is_file():
        raise AdapterStartupError(
            f"clip-linear weights directory {weights} must contain backbone/ and head.pt"
        )
    try:
        backbone = CLIPVisionModel.from_pretrained(backbone_dir, local_files_only=True)
        head_state = torch.load(head_path, map_location=device, weights_only=True)
    except Exception as exc:
        raise AdapterStartupError(f"cannot load weights {weights}: {exc}") from None
    head = torch.nn.Linear(head_state["weight"].shape[1], 1)
    head.load_state_dict(head_state)
    backbone.to(device).eval()
    head.to(device).eval()

    def score(path: str) -> float:
        with torch.no_grad():
            tensor = _image_tensor(path, CLIP_MEAN, CLIP_STD).to(device)
            features = backbone(pixel_values=tensor).pooler_output
            logit = head(features)
        return torch.sigmoid(logit.reshape(())).item()

    return score


MODELS: dict[str, ModelEntry] = {
    "echo": ModelEntry("echo", False, _echo_descriptor, _echo_load),
    "cnndetect": ModelEntry("cnndetect", True, _cnndetect_descriptor, _cnndetect_load),
    "clip-linear": ModelEntry("clip-linear", True, _clip_linear_descriptor, _clip_linear_load),
}


def build_adapter(
    model_id: str, weights: str | None, device: str = "cpu", value: float = 0.5
):
    """Resolve a model id to (descriptor, score_fn), validating weights."""
    if model_id not in MODELS:
        raise AdapterStartupError(
            f"unknown model {model_id!r} (available: {', '.join(sorted(MODELS))})"
        )
    entry = MODELS[model_id]
    weights_path: Path | None = None
    if entry.needs_weights:
        if not weights:
            raise AdapterStartupError(f"model {model_id!r} requires --weights")
        weights_path = Path(weights)
        if not weights_path.exists():
            raise AdapterStartupError(f"weights path does not exist: {weights_path}")
    descriptor = entry.make_descriptor(value, device)
    score_fn = entry.load(weights_path, device, value)
    return descriptor, score_fn
