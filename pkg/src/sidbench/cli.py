"""Command-line surface tying manifests, transforms, runs, and reports together.

Exit codes: 0 success, 1 usage error, 2 partial cell failures (or validation
issues), 3 fatal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import report as report_mod
from . import runner as runner_mod
from .imaging import TransformChain, apply_chain, load_image, save_png
from .manifest import (
    DatasetManifest,
    ManifestError,
    load_manifest,
    save_manifest,
    validate_files,
)
from .metrics import DEFAULT_THRESHOLD
from .protocol import DEFAULT_TIMEOUT_SECS
from .runner import EvaluationPlan, PlanError, PreprocessOverride, load_run_result
from .serve import serve_builtin
from .synthcorpus import make_demo_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_FATAL = 3

DEMO_DETECTORS = (
    "builtin:label_leak",
    "builtin:random:seed=42",
    "builtin:constant:v=0.5",
    "builtin:highfreq:cutoff=0.5,scale=8",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sidbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="run seed (u64)")
    common.add_argument("--batch-size", type=int, default=runner_mod.DEFAULT_BATCH_SIZE)
    common.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT_SECS)
    common.add_argument("--jobs", type=int, default=None, help="transform worker pool size")

    p = sub.add_parser("validate", help="check a manifest and its files")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("perturb", help="materialize a perturbed copy of a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="score a (detector x manifest x chain) grid", parents=[common])
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--detector", action="append", required=True)
    p.add_argument("--chain", action="append", default=None)
    p.add_argument("--preprocess", default=None, help="crop:N or resize:N override")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run the default robustness grid", parents=[common])
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--detector", action="append", required=True)
    p.add_argument("--chain", action="append", default=None, help="extra chains beyond the grid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="emit metric/calibration/transform reports")
    p.add_argument("--run", required=True)
    p.add_argument("--threshold", default=str(DEFAULT_THRESHOLD), help='a float or "oracle"')
    p.add_argument("--group-by", choices=["family"], default=None)
    p.add_argument("--out", default=None, help="report directory (default: <run>/reports)")

    p = sub.add_parser("calibrate", help="threshold-calibration report")
    p.add_argument("--run", required=True)
    p.add_argument("--scope", choices=["per-dataset", "per-model"], default="per-dataset")
    p.add_argument("--out", default=None)

    p = sub.add_parser("demo", help="self-contained end-to-end demonstration", parents=[common])
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=2000)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(seed=7)

    p = sub.add_parser("serve-builtin", help="builtin detector as a protocol child process")
    p.add_argument("spec", help="e.g. constant:v=0.5 or builtin:random:seed=42")
    p.add_argument("--manifest", default=None, help="required for label_leak")

    return parser


def _cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    issues = validate_files(manifest)
    print(f"{manifest.name}: {len(manifest)} records ({manifest.n_real} real, {manifest.n_fake} fake)")
    for issue in issues:
        print(f"  {issue.path}: {issue.issue}")
    if issues:
        print(f"{len(issues)} file issue(s) found")
        return EXIT_PARTIAL
    print("all files present and decodable")
    return EXIT_OK


def _cmd_perturb(args) -> int:
    manifest = load_manifest(args.manifest)
    chain = TransformChain.parse(args.chain)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in manifest.records:
        img = load_image(manifest.resolve(rec))
        out_path = out_dir / rec.path
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_png(apply_chain(img, chain), out_path)
    perturbed = DatasetManifest(
        name=f"{manifest.name}[{chain.id}]",
        root=out_dir,
        records=manifest.records,
    )
    save_manifest(perturbed, out_dir / "manifest.jsonl")
    print(f"wrote {len(manifest)} perturbed images and manifest to {out_dir}")
    return EXIT_OK


def _plan_from_args(args, chains) -> EvaluationPlan:
    return EvaluationPlan(
        detectors=tuple(args.detector),
        manifests=tuple(args.manifest),
        chains=chains,
        preprocess=PreprocessOverride.parse(args.preprocess) if getattr(args, "preprocess", None) else None,
        batch_size=args.batch_size,
        seed=args.seed,
        output_dir=args.out,
        timeout_secs=args.timeout_secs,
        jobs=args.jobs,
    )


def _report_failures(result) -> int:
    for cell in result.failed:
        print(f"FAILED {cell.cell_id}: {cell.error}", file=sys.stderr)
    print(
        f"{len(result.completed)} cell(s) completed, {len(result.failed)} failed; "
        f"run directory: {result.run_dir}"
    )
    return EXIT_PARTIAL if result.failed else EXIT_OK


def _cmd_run(args) -> int:
    chain_texts = args.chain or [""]
    chains = tuple(TransformChain.parse(c) for c in chain_texts)
    result = runner_mod.run(_plan_from_args(args, chains))
    return _report_failures(result)


def _cmd_sweep(args) -> int:
    plan = _plan_from_args(args, runner_mod.sweep_chains(args.chain))
    result = runner_mod.run(plan)
    return _report_failures(result)


def _cmd_report(args) -> int:
    result = load_run_result(args.run)
    threshold = "oracle" if args.threshold == "oracle" else float(args.threshold)
    out_dir = Path(args.out) if args.out else Path(args.run) / "reports"
    written = report_mod.write_reports(
        result,
        out_dir,
        threshold=threshold,
        group_by_family=args.group_by == "family",
    )
    print(f"wrote {', '.join(written)} to {out_dir}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    result = load_run_result(args.run)
    rows = report_mod.calibration_report(result, scope=args.scope)
    table = report_mod.calibration_table_for_render(rows)
    out_dir = Path(args.out) if args.out else Path(args.run) / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt, ext in (("csv", "csv"), ("markdown", "md")):
        (out_dir / f"report_calibration.{ext}").write_bytes(report_mod.render(table, fmt))
    print(f"wrote report_calibration.csv/.md to {out_dir}")
    return EXIT_OK


def _cmd_demo(args) -> int:
    out = Path(args.out)
    manifest_path = make_demo_corpus(
        out / "corpus", n_images=args.images, size=args.size, seed=args.seed
    )
    print(f"demo corpus: {manifest_path}")
    plan = EvaluationPlan(
        detectors=DEMO_DETECTORS,
        manifests=(str(manifest_path),),
        batch_size=args.batch_size,
        seed=args.seed,
        output_dir=str(out / "run"),
        timeout_secs=args.timeout_secs,
        jobs=args.jobs,
    )
    result = runner_mod.run(plan)
    if result.completed:
        written = report_mod.write_reports(result, out / "reports")
        print(f"reports: {', '.join(written)} in {out / 'reports'}")
    return _report_failures(result)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": _cmd_validate,
        "perturb": _cmd_perturb,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
        "calibrate": _cmd_calibrate,
        "demo": _cmd_demo,
        "serve-builtin": lambda a: serve_builtin(a.spec, a.manifest),
    }
    try:
        return handlers[args.command](args)
    except (ManifestError, PlanError, report_mod.ReportError, FileNotFoundError, ValueError) as exc:
        print(f"sidbench: fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
