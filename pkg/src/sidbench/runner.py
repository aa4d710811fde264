"""Evaluation-grid orchestration: (detector x dataset x chain) cells.

Scores are the cached artifact of record, keyed by (detector identity,
SHA-256 of the original file bytes, chain id, preprocess tag); perturbed
images are reproducible scratch, content-addressed and garbage-collectable.
A completed cell's outputs are immutable: re-running the same plan performs
no rescoring and rewrites identical bytes, which also makes interrupted
runs resumable.

Run directory layout::

    plan.json                                  expanded canonical plan
    cache/<detector_id>/<digest>/<chain>.json  one score per image
    scratch/<content-hash>.png                 perturbed image files
    scores/<cell>.jsonl                        per-cell ScoreSet
    results.json                               per-cell outcomes
    run.log                                    timestamped progress log

Cells for different detectors run concurrently (one protocol session
each); cells for the same detector are serialized through its session.
Decode/transform work is fanned out to a bounded worker pool.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import builtin_detectors as builtin
from .imaging import IDENTITY_CHAIN_ID, TransformChain, center_crop, load_image, resize, save_png
from .manifest import DatasetManifest, fake_family, load_manifest
from .metrics import ScoreEntry, ScoreSet
from .protocol import DEFAULT_TIMEOUT_SECS, DetectorSession, ProtocolError, open_session

CACHE_DIR_ENV = "SIDBENCH_CACHE_DIR"
DEFAULT_BATCH_SIZE = 32

# The default robustness sweep: originals plus the blur/JPEG grid.
DEFAULT_SWEEP_CHAINS = (
    IDENTITY_CHAIN_ID,
    "blur:sigma=2",
    "blur:sigma=4",
    "jpeg:q=95",
    "jpeg:q=90",
    "jpeg:q=50",
    "jpeg:q=30",
)


class PlanError(ValueError):
    """Raised for invalid evaluation plans."""


@dataclass(frozen=True)
class PreprocessOverride:
    """Harness-side preprocessing for the crop-vs-resize study."""

    kind: str  # "crop" | "resize"
    size: int

    def __post_init__(self) -> None:
        if self.kind not in ("crop", "resize"):
            raise PlanError(f"preprocess kind must be crop or resize, got {self.kind!r}")
        if self.size < 1:
            raise PlanError(f"preprocess size must be >= 1, got {self.size}")

    @property
    def tag(self) -> str:
        return f"{self.kind}{self.size}"

    def apply(self, img):
        if self.kind == "crop":
            return center_crop(img, self.size, self.size)
        return resize(img, self.size, self.size)

    @classmethod
    def parse(cls, text: str) -> "PreprocessOverride":
        kind, sep, size = text.partition(":")
        if not sep:
            raise PlanError(f"malformed preprocess spec {text!r} (expected kind:size)")
        try:
            return cls(kind=kind, size=int(size))
        except ValueError:
            raise PlanError(f"bad preprocess size in {text!r}") from None


@dataclass(frozen=True)
class EvaluationPlan:
    detectors: tuple[str, ...]
    manifests: tuple[str, ...]
    chains: tuple[TransformChain, ...] = (TransformChain(),)
    preprocess: PreprocessOverride | None = None
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    output_dir: str = "run"
    timeout_secs: float = DEFAULT_TIMEOUT_SECS
    jobs: int | None = None

    def __post_init__(self) -> None:
        if not self.detectors or not self.manifests or not self.chains:
            raise PlanError("plan grid is empty (need at least one detector, manifest, and chain)")
        ids = [c.id for c in self.chains]
        if len(set(ids)) != len(ids):
            raise PlanError("duplicate chain ids in plan")
        if len(set(self.detectors)) != len(self.detectors):
            raise PlanError("duplicate detector commands in plan")
        if len(set(self.manifests)) != len(self.manifests):
            raise PlanError("duplicate manifest paths in plan")
        if self.batch_size < 1:
            raise PlanError(f"batch_size must be >= 1, got {self.batch_size}")
        for det in self.detectors:
            if builtin.is_builtin(det):
                builtin.parse_builtin_spec(det)  # validates
            elif not det.strip():
                raise PlanError("empty detector command")

    def to_json_obj(self) -> dict:
        return {
            "detectors": list(self.detectors),
            "manifests": list(self.manifests),
            "chains": [c.id for c in self.chains],
            "preprocess": (
                {"kind": self.preprocess.kind, "size": self.preprocess.size}
                if self.preprocess
                else None
            ),
            "batch_size": self.batch_size,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "timeout_secs": self.timeout_secs,
        }


@dataclass(frozen=True)
class Cell:
    detector: str
    manifest_path: str
    chain: TransformChain


def expand_plan(plan: EvaluationPlan) -> list[Cell]:
    """Full cross product: detectors outer, manifests middle, chains inner."""
    return [
        Cell(detector=d, manifest_path=m, chain=c)
        for d in plan.detectors
        for m in plan.manifests
        for c in plan.chains
    ]


@dataclass
class CellResult:
    cell_id: str
    detector: str
    detector_id: str
    manifest_path: str
    manifest_name: str
    family: str
    chain_id: str
    preprocess_tag: str
    status: str  # "completed" | "failed"
    scores_path: str | None
    n_images: int
    n_real: int
    n_fake: int
    wall_time_secs: float
    cache_hits: int
    error: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "cell_id": self.cell_id,
            "detector": self.detector,
            "detector_id": self.detector_id,
            "manifest_path": self.manifest_path,
            "manifest_name": self.manifest_name,
            "family": self.family,
            "chain_id": self.chain_id,
            "preprocess_tag": self.preprocess_tag,
            "status": self.status,
            "scores_path": self.scores_path,
            "n_images": self.n_images,
            "n_real": self.n_real,
            "n_fake": self.n_fake,
            "wall_time_secs": self.wall_time_secs,
            "cache_hits": self.cache_hits,
            "error": self.error,
        }


@dataclass
class RunResult:
    run_dir: Path
    cells: list[CellResult] = field(default_factory=list)

    @property
    def completed(self) -> list[CellResult]:
        return [c for c in self.cells if c.status == "completed"]

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if c.status == "failed"]

    def load_scores(self, cell: CellResult) -> ScoreSet:
        if cell.scores_path is None:
            raise FileNotFoundError(f"cell {cell.cell_id} has no scores")
        entries = []
        with open(self.run_dir / cell.scores_path, encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                entries.append(ScoreEntry(id=obj["id"], score=obj["score"], label=obj["label"]))
        return ScoreSet(entries=tuple(entries))


# ---------------------------------------------------------------------------
# Atomic file helpers

def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class ScoreCache:
    """Per-image score cache; concurrent readers, atomic single writers."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def _path(self, detector_id: str, digest: str, chain_tag: str) -> Path:
        return self.root / detector_id / digest / f"{chain_tag}.json"

    def get(self, detector_id: str, digest: str, chain_tag: str) -> float | None:
        path = self._path(detector_id, digest, chain_tag)
        try:
            with open(path, encoding="utf-8") as fh:
                return float(json.load(fh)["score"])
        except FileNotFoundError:
            return None

    def put(self, detector_id: str, digest: str, chain_tag: str, score: float) -> None:
        path = self._path(detector_id, digest, chain_tag)
        _atomic_write_bytes(path, json.dumps({"score": score}).encode("utf-8"))


# ---------------------------------------------------------------------------
# Detector backends

class _BuiltinBackend:
    """Scores through the builtin detectors directly, bypassing the wire."""

    def __init__(self, spec_text: str):
        self.spec = builtin.parse_builtin_spec(spec_text)
        self.descriptor = builtin.builtin_descriptor(self.spec)
        self._detector = None if self.spec.kind == "label_leak" else builtin.make_detector(self.spec)

    def score_items(
        self, items: list[tuple[str, str]], manifest: DatasetManifest, preprocessed: bool
    ) -> list[float]:
        if self.spec.kind == "label_leak":
            leak = builtin.make_detector(self.spec, manifest=manifest)
            return [leak.score_id(record_id) for record_id, _ in items]
        return [self._detector.score_path(path) for _, path in items]

    def close(self) -> None:
        pass


class _SessionBackend:
    """Scores through a detector child process over the wire protocol."""

    def __init__(self, command: str, timeout_secs: float):
        self.command = command
        self.timeout_secs = timeout_secs
        self._session: DetectorSession | None = None

    def _ensure_session(self) -> DetectorSession:
        if self._session is None:
            self._session = open_session(self.command, timeout_secs=self.timeout_secs)
        return self._session

    @property
    def descriptor(self):
        return self._ensure_session().descriptor

    def score_items(
        self, items: list[tuple[str, str]], manifest: DatasetManifest, preprocessed: bool
    ) -> list[float]:
        session = self._ensure_session()
        try:
            return [s.score for s in session.score_batch(items, preprocessed=preprocessed)]
        except ProtocolError:
            # drop the broken session; the next cell gets a fresh process
            session.shutdown()
            self._session = None
            raise

    def close(self) -> None:
        if self._session is not None:
            self._session.shutdown()
            self._session = None


def _make_backend(detector: str, timeout_secs: float):
    if builtin.is_builtin(detector):
        return _BuiltinBackend(detector)
    return _SessionBackend(detector, timeout_secs)


# ---------------------------------------------------------------------------
# The run loop

class _RunLog:
    def __init__(self, path: Path):
        self._path = path
        self._lock = threading.Lock()

    def write(self, message: str) -> None:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(f"{stamp} {message}\n")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _chain_tag(chain_id: str, preprocess: PreprocessOverride | None) -> str:
    return chain_id if preprocess is None else f"{chain_id}+{preprocess.tag}"


def _cell_id(detector_id: str, manifest_name: str, chain_id: str, preprocess) -> str:
    base = f"{detector_id}__{manifest_name}__{chain_id}"
    return base if preprocess is None else f"{base}+{preprocess.tag}"


class _Runner:
    def __init__(self, plan: EvaluationPlan):
        self.plan = plan
        self.run_dir = Path(plan.output_dir)
        cache_override = os.environ.get(CACHE_DIR_ENV)
        self.cache = ScoreCache(Path(cache_override) if cache_override else self.run_dir / "cache")
        self.scratch = self.run_dir / "scratch"
        self.scores_dir = self.run_dir / "scores"
        # parse manifests before committing any run directory
        self.manifests: dict[str, DatasetManifest] = {
            m: load_manifest(m) for m in plan.manifests
        }
        names = [m.name for m in self.manifests.values()]
        if len(set(names)) != len(names):
            raise PlanError(f"manifest names must be unique within a plan, got {names}")
        self._digests: dict[str, str] = {}
        self._digest_lock = threading.Lock()
        self._prepare_pool: ThreadPoolExecutor | None = None
        self.log: _RunLog | None = None

    def _original_digest(self, path: Path) -> str:
        key = str(path)
        with self._digest_lock:
            cached = self._digests.get(key)
        if cached is not None:
            return cached
        digest = _file_digest(path)
        with self._digest_lock:
            self._digests[key] = digest
        return digest

    def _prepare_image(
        self, src: Path, digest: str, chain: TransformChain, preprocess: PreprocessOverride | None
    ) -> Path:
        """Materialize the perturbed/preprocessed file; content-addressed."""
        if not chain and preprocess is None:
            return src  # identity: score the original file in place
        key = hashlib.sha256(
            f"{digest}|{chain.id}|{preprocess.tag if preprocess else ''}".encode("utf-8")
        ).hexdigest()
        out = self.scratch / f"{key}.png"
        if out.exists():
            return out
        img = load_image(src)
        img = chain.apply(img)
        if preprocess is not None:
            img = preprocess.apply(img)
        fd, tmp = tempfile.mkstemp(dir=self.scratch, prefix=f".{key}.", suffix=".png")
        os.close(fd)
        try:
            save_png(img, tmp)
            os.replace(tmp, out)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
        return out

    def _run_cell(self, backend, cell: Cell) -> CellResult:
        plan = self.plan
        manifest = self.manifests[cell.manifest_path]
        chain = cell.chain
        start = time.monotonic()
        detector_id = backend.descriptor.detector_id
        chain_tag = _chain_tag(chain.id, plan.preprocess)
        cell_id = _cell_id(detector_id, manifest.name, chain.id, plan.preprocess)

        digests: list[str] = []
        for rec in manifest.records:
            src = manifest.resolve(rec)
            if not src.exists():
                raise FileNotFoundError(f"image file missing: {src}")
            digests.append(self._original_digest(src))

        cached: dict[str, float] = {}
        pending: list[int] = []
        for i, rec in enumerate(manifest.records):
            hit = self.cache.get(detector_id, digests[i], chain_tag)
            if hit is None:
                pending.append(i)
            else:
                cached[rec.path] = hit
        cache_hits = len(manifest.records) - len(pending)

        if pending:
            prepared = list(
                self._prepare_pool.map(
                    lambda i: self._prepare_image(
                        manifest.resolve(manifest.records[i]), digests[i], chain, plan.preprocess
                    ),
                    pending,
                )
            )
            preprocessed = plan.preprocess is not None
            for lo in range(0, len(pending), plan.batch_size):
                batch_idx = pending[lo : lo + plan.batch_size]
                batch_paths = prepared[lo : lo + plan.batch_size]
                items = [
                    (manifest.records[i].path, str(p)) for i, p in zip(batch_idx, batch_paths)
                ]
                values = backend.score_items(items, manifest, preprocessed)
                for i, value in zip(batch_idx, values):
                    rec = manifest.records[i]
                    self.cache.put(detector_id, digests[i], chain_tag, value)
                    cached[rec.path] = value

        lines = [
            json.dumps(
                {"id": rec.path, "score": cached[rec.path], "label": rec.label},
                separators=(",", ":"),
            )
            for rec in manifest.records
        ]
        scores_rel = Path("scores") / f"{cell_id}.jsonl"
        _atomic_write_bytes(self.run_dir / scores_rel, ("\n".join(lines) + "\n").encode("utf-8"))

        return CellResult(
            cell_id=cell_id,
            detector=cell.detector,
            detector_id=detector_id,
            manifest_path=cell.manifest_path,
            manifest_name=manifest.name,
            family=fake_family(manifest),
            chain_id=chain.id,
            preprocess_tag=plan.preprocess.tag if plan.preprocess else "",
            status="completed",
            scores_path=str(scores_rel),
            n_images=len(manifest.records),
            n_real=manifest.n_real,
            n_fake=manifest.n_fake,
            wall_time_secs=time.monotonic() - start,
            cache_hits=cache_hits,
        )

    def _failed_cell(self, cell: Cell, exc: Exception, start: float) -> CellResult:
        manifest = self.manifests[cell.manifest_path]
        return CellResult(
            cell_id=_cell_id(cell.detector, manifest.name, cell.chain.id, self.plan.preprocess),
            detector=cell.detector,
            detector_id=cell.detector,
            manifest_path=cell.manifest_path,
            manifest_name=manifest.name,
            family=fake_family(manifest),
            chain_id=cell.chain.id,
            preprocess_tag=self.plan.preprocess.tag if self.plan.preprocess else "",
            status="failed",
            scores_path=None,
            n_images=len(manifest.records),
            n_real=manifest.n_real,
            n_fake=manifest.n_fake,
            wall_time_secs=time.monotonic() - start,
            cache_hits=0,
            error=f"{type(exc).__name__}: {exc}",
        )

    def _run_lane(self, detector: str, cells: list[Cell]) -> list[CellResult]:
        results: list[CellResult] = []
        backend = None
        for cell in cells:
            start = time.monotonic()
            try:
                if backend is None:
                    backend = _make_backend(detector, self.plan.timeout_secs)
                result = self._run_cell(backend, cell)
            except Exception as exc:
                result = self._failed_cell(cell, exc, start)
                self.log.write(f"FAILED {result.cell_id}: {result.error}")
            else:
                self.log.write(
                    f"completed {result.cell_id} "
                    f"({result.n_images} images, {result.cache_hits} cache hits, "
                    f"{result.wall_time_secs:.2f}s)"
                )
            results.append(result)
        if backend is not None:
            backend.close()
        return results

    def run(self) -> RunResult:
        plan = self.plan
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.scratch.mkdir(parents=True, exist_ok=True)
        self.scores_dir.mkdir(parents=True, exist_ok=True)
        self.log = _RunLog(self.run_dir / "run.log")

        cells = expand_plan(plan)
        plan_obj = plan.to_json_obj()
        plan_obj["cells"] = [
            {"detector": c.detector, "manifest": c.manifest_path, "chain": c.chain.id}
            for c in cells
        ]
        _atomic_write_bytes(
            self.run_dir / "plan.json",
            (json.dumps(plan_obj, indent=2, sort_keys=True) + "\n").encode("utf-8"),
        )
        self.log.write(f"plan: {len(cells)} cells")

        jobs = plan.jobs or os.cpu_count() or 4
        by_detector: dict[str, list[Cell]] = {}
        for cell in cells:
            by_detector.setdefault(cell.detector, []).append(cell)

        result = RunResult(run_dir=self.run_dir)
        with ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="prepare") as prep:
            self._prepare_pool = prep
            with ThreadPoolExecutor(
                max_workers=len(by_detector), thread_name_prefix="lane"
            ) as lanes:
                futures = {
                    det: lanes.submit(self._run_lane, det, dcells)
                    for det, dcells in by_detector.items()
                }
                lane_results = {det: fut.result() for det, fut in futures.items()}
        # deterministic cell order: plan order
        for det in plan.detectors:
            result.cells.extend(lane_results[det])

        records = [c.to_json_obj() for c in result.cells]
        _atomic_write_bytes(
            self.run_dir / "results.json",
            (json.dumps({"cells": records}, indent=2) + "\n").encode("utf-8"),
        )
        self.log.write(
            f"done: {len(result.completed)} completed, {len(result.failed)} failed"
        )
        return result


def run(plan: EvaluationPlan) -> RunResult:
    """Execute a plan; per-cell failures are recorded, not raised."""
    return _Runner(plan).run()


def sweep_chains(extra: list[str] | None = None) -> tuple[TransformChain, ...]:
    """The default robustness grid, optionally extended with custom chains."""
    ids = list(DEFAULT_SWEEP_CHAINS)
    for chain in extra or []:
        if chain not in ids:
            ids.append(chain)
    return tuple(TransformChain.parse(c) for c in ids)


def sweep_transforms(plan: EvaluationPlan, extra_chains: list[str] | None = None) -> RunResult:
    """Run the robustness sweep grid over the plan's detectors and manifests."""
    swept = EvaluationPlan(
        detectors=plan.detectors,
        manifests=plan.manifests,
        chains=sweep_chains(extra_chains),
        preprocess=plan.preprocess,
        batch_size=plan.batch_size,
        seed=plan.seed,
        output_dir=plan.output_dir,
        timeout_secs=plan.timeout_secs,
        jobs=plan.jobs,
    )
    return run(swept)


def load_run_result(run_dir: Path | str) -> RunResult:
    """Reload a completed run's results for reporting."""
    run_dir = Path(run_dir)
    results_path = run_dir / "results.json"
    if not results_path.exists():
        raise FileNotFoundError(f"no results.json in {run_dir} (run not completed?)")
    obj = json.loads(results_path.read_text(encoding="utf-8"))
    cells = [CellResult(**rec) for rec in obj["cells"]]
    return RunResult(run_dir=run_dir, cells=cells)
