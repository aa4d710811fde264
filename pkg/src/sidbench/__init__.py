"""Detector-agnostic benchmark harness for synthetic-image detection.

Manifests describe labeled corpora; transform chains perturb them; pluggable
detector processes score them over a line-delimited JSON protocol; metrics,
threshold calibration, and reports summarize the results reproducibly.
"""

from .imaging import TransformChain, TransformSpec, apply_chain
from .manifest import DatasetManifest, ImageRecord, group_by_family, load_manifest, parse_manifest, validate_files
from .metrics import (
    ConfusionCounts,
    ScoreEntry,
    ScoreSet,
    accuracy,
    average_precision,
    confusion_at,
    oracle_threshold,
    pr_curve,
    roc_auc,
    tpr_tnr,
)
from .protocol import DetectorDescriptor, DetectorSession, open_session
from .runner import EvaluationPlan, RunResult, expand_plan, load_run_result, run, sweep_transforms

__version__ = "0.1.0"

__all__ = [
    "TransformChain",
    "TransformSpec",
    "apply_chain",
    "DatasetManifest",
    "ImageRecord",
    "group_by_family",
    "load_manifest",
    "parse_manifest",
    "validate_files",
    "ConfusionCounts",
    "ScoreEntry",
    "ScoreSet",
    "accuracy",
    "average_precision",
    "confusion_at",
    "oracle_threshold",
    "pr_curve",
    "roc_auc",
    "tpr_tnr",
    "DetectorDescriptor",
    "DetectorSession",
    "open_session",
    "EvaluationPlan",
    "RunResult",
    "expand_plan",
    "load_run_result",
    "run",
    "sweep_transforms",
    "__version__",
]
