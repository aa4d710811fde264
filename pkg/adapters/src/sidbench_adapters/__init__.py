"""Detector-side SDK for the sidbench wire protocol.

Implements the child-process half of the benchmark harness's line-delimited
JSON protocol, plus reference adapters wrapping pretrained detection models
and an echo adapter for conformance testing.
"""

from .models import MODELS, AdapterStartupError, build_adapter
from .serve import serve
from .wire import AdapterDescriptor

__version__ = "0.1.0"

__all__ = [
    "MODELS",
    "AdapterStartupError",
    "build_adapter",
    "serve",
    "AdapterDescriptor",
    "__version__",
]
