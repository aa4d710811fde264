"""Dataset manifests: labeled image corpora with generator/family taxonomy.

A manifest is a UTF-8 JSON Lines file. The first line is a header object
``{"name": ..., "schema_version": 1}``; every following line is one record
``{"path": ..., "label": "real"|"fake", "generator": ..., "family": ...,
"source": ...}``. Paths are stored relative to a corpus root directory so
manifests stay relocatable. Unknown fields on any line are ignored.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from PIL import Image, UnidentifiedImageError

SCHEMA_VERSION = 1
LABELS = ("real", "fake")


class ManifestError(ValueError):
    """Raised on structurally invalid manifest content."""


@dataclass(frozen=True)
class ImageRecord:
    """One corpus image: relative path, binary label, and taxonomy metadata."""

    path: str
    label: str
    generator: str
    family: str
    source: str | None = None

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ManifestError(f"unknown label value {self.label!r}")
        if self.label == "real" and self.generator != "none":
            raise ManifestError(
                f"real record {self.path!r} must have generator 'none', "
                f"got {self.generator!r}"
            )
        if not self.path:
            raise ManifestError("record path is empty")
        parts = Path(self.path).parts
        if ".." in parts:
            raise ManifestError(f"record path {self.path!r} contains a parent-directory segment")
        if Path(self.path).is_absolute():
            raise ManifestError(f"record path {self.path!r} is absolute; paths must be relative")

    @property
    def is_fake(self) -> bool:
        return self.label == "fake"

    def to_json_obj(self) -> dict:
        obj = {
            "path": self.path,
            "label": self.label,
            "generator": self.generator,
            "family": self.family,
        }
        if self.source is not None:
            obj["source"] = self.source
        return obj


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered, immutable collection of :class:`ImageRecord` under a root dir."""

    name: str
    root: Path
    records: tuple[ImageRecord, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if not self.name or "/" in self.name:
            raise ManifestError(f"manifest name {self.name!r} must be non-empty and contain no '/'")
        if not self.records:
            raise ManifestError("manifest has no records")
        seen: set[str] = set()
        for rec in self.records:
            if rec.path in seen:
                raise ManifestError(f"duplicate path {rec.path!r}")
            seen.add(rec.path)

    @property
    def n_real(self) -> int:
        return sum(1 for r in self.records if r.label == "real")

    @property
    def n_fake(self) -> int:
        return sum(1 for r in self.records if r.label == "fake")

    def resolve(self, record: ImageRecord) -> Path:
        return Path(self.root) / record.path

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class ValidationIssue:
    path: str
    issue: str  # "missing" | "unreadable" | "undecodable"


_REQUIRED_FIELDS = ("path", "label", "generator", "family")


def _record_from_obj(obj: Mapping, line_no: int) -> ImageRecord:
    for key in _REQUIRED_FIELDS:
        if key not in obj:
            raise ManifestError(f"missing required field {key!r} at line {line_no}")
    try:
        return ImageRecord(
            path=str(obj["path"]),
            label=str(obj["label"]),
            generator=str(obj["generator"]),
            family=str(obj["family"]),
            source=str(obj["source"]) if obj.get("source") is not None else None,
        )
    except ManifestError as exc:
        raise ManifestError(f"{exc} (line {line_no})") from None


def parse_manifest(data: bytes | io.BufferedIOBase, root: Path | str) -> DatasetManifest:
    """Parse a JSONL manifest byte stream.

    ``root`` is the directory record paths are resolved against. Errors name
    the offending 1-based line number.
    """
    if isinstance(data, bytes):
        raw = data
    else:
        raw = data.read()
    text = raw.decode("utf-8")

    lines = text.splitlines()
    header = None
    records: list[ImageRecord] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"malformed JSON at line {line_no}: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise ManifestError(f"malformed JSON at line {line_no}: expected an object")
        if header is None:
            if "name" not in obj or "schema_version" not in obj:
                raise ManifestError("missing header")
            if obj["schema_version"] != SCHEMA_VERSION:
                raise ManifestError(
                    f"unsupported schema_version {obj['schema_version']!r} (expected {SCHEMA_VERSION})"
                )
            header = obj
            continue
        rec = _record_from_obj(obj, line_no)
        if rec.path in seen:
            raise ManifestError(f"duplicate path at line {line_no}: {rec.path!r}")
        seen[rec.path] = line_no
        records.append(rec)

    if header is None:
        raise ManifestError("missing header")
    return DatasetManifest(
        name=str(header["name"]),
        root=Path(root),
        records=tuple(records),
    )


def serialize_manifest(manifest: DatasetManifest) -> bytes:
    """Serialize back to the JSONL wire form; inverse of :func:`parse_manifest`."""
    out = [json.dumps({"name": manifest.name, "schema_version": manifest.schema_version})]
    for rec in manifest.records:
        out.append(json.dumps(rec.to_json_obj()))
    return ("\n".join(out) + "\n").encode("utf-8")


def load_manifest(path: Path | str) -> DatasetManifest:
    """Load a manifest file; the corpus root is the file's directory."""
    path = Path(path)
    return parse_manifest(path.read_bytes(), root=path.parent)


def save_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    Path(path).write_bytes(serialize_manifest(manifest))


def validate_files(manifest: DatasetManifest) -> list[ValidationIssue]:
    """Check that every record's file exists and decodes as PNG/JPEG.

    Issues are data, not failures: an empty list means the corpus is fully
    usable. Repeated calls on unchanged files yield identical reports.
    """
    issues: list[ValidationIssue] = []
    for rec in manifest.records:
        file = manifest.resolve(rec)
        if not file.exists():
            issues.append(ValidationIssue(rec.path, "missing"))
            continue
        try:
            data = file.read_bytes()
        except OSError:
            issues.append(ValidationIssue(rec.path, "unreadable"))
            continue
        try:
            with Image.open(io.BytesIO(data)) as img:
                if img.format not in ("PNG", "JPEG"):
                    issues.append(ValidationIssue(rec.path, "undecodable"))
                    continue
                img.load()
        except (UnidentifiedImageError, OSError, SyntaxError):
            issues.append(ValidationIssue(rec.path, "undecodable"))
    return issues


def group_by_family(manifest: DatasetManifest) -> dict[str, DatasetManifest]:
    """Partition records by family; groups preserve record order."""
    grouped: dict[str, list[ImageRecord]] = {}
    for rec in manifest.records:
        grouped.setdefault(rec.family, []).append(rec)
    return {
        family: DatasetManifest(
            name=manifest.name,
            root=manifest.root,
            records=tuple(recs),
        )
        for family, recs in grouped.items()
    }


def fake_family(manifest: DatasetManifest) -> str:
    """The family tag reported for a dataset: the fake records' family.

    Datasets are expected to hold fakes from one generator family plus reals;
    mixed fake families are reported as "mixed", all-real corpora as "real".
    """
    families = {r.family for r in manifest.records if r.is_fake}
    if not families:
        return "real"
    if len(families) == 1:
        return next(iter(families))
    return "mixed"
