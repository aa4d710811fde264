"""Turn run results into metric tables, calibration and robustness reports.

Tables render to CSV (RFC-style quoting, fixed column order) and Markdown
pipe tables with identical values. Metric cells use 4-decimal fixed-point;
undefined values render as the empty string in CSV and an em dash in
Markdown. Every number is recomputable from the persisted score files, so
regenerating a report from ``scores/`` is byte-identical.

Dataset averages are unweighted means over datasets (each dataset counts
once, regardless of image count); members with an undefined metric are
excluded from that metric's mean and the per-metric membership count is
reported alongside.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

from .imaging import IDENTITY_CHAIN_ID
from .metrics import (
    DEFAULT_THRESHOLD,
    ScoreEntry,
    ScoreSet,
    accuracy,
    average_precision,
    confusion_at,
    oracle_threshold,
    roc_auc,
    tpr_tnr,
)
from .runner import RunResult

logger = logging.getLogger(__name__)

METRIC_NAMES = ("acc", "ap", "tpr", "tnr", "auc")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class MetricRow:
    detector: str
    dataset: str
    family: str
    chain_id: str
    threshold_used: float
    acc: float | None
    ap: float | None
    tpr: float | None
    tnr: float | None
    auc: float | None
    n_real: int
    n_fake: int

    def metric(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class AggregateRow:
    scope: str  # "per_family" | "overall" | "per_transform"
    detector: str
    key: str
    means: dict[str, float | None]
    counts: dict[str, int]
    n_datasets: int


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


def _cell_metrics(scores: ScoreSet, threshold: float) -> dict[str, float | None]:
    counts = confusion_at(scores, threshold)
    tpr, tnr = tpr_tnr(counts)
    has_fake = scores.n_fake > 0
    has_real = scores.n_real > 0
    return {
        "acc": accuracy(counts),
        "ap": average_precision(scores) if has_fake else None,
        "tpr": tpr,
        "tnr": tnr,
        "auc": roc_auc(scores) if (has_fake and has_real) else None,
    }


def metric_table(result: RunResult, threshold: float | str = DEFAULT_THRESHOLD) -> list[MetricRow]:
    """One row per completed cell; ``threshold="oracle"`` calibrates per cell."""
    if not result.completed:
        raise ReportError("no completed cells to report on")
    rows: list[MetricRow] = []
    for cell in result.completed:
        scores = result.load_scores(cell)
        if threshold == "oracle":
            t, _ = oracle_threshold(scores)
        else:
            t = float(threshold)
        m = _cell_metrics(scores, t)
        rows.append(
            MetricRow(
                detector=cell.detector_id,
                dataset=cell.manifest_name,
                family=cell.family,
                chain_id=cell.chain_id,
                threshold_used=t,
                n_real=cell.n_real,
                n_fake=cell.n_fake,
                **m,
            )
        )
    return rows


def _mean_defined(values: list[float | None]) -> tuple[float | None, int]:
    defined = [v for v in values if v is not None]
    if not defined:
        return None, 0
    return sum(defined) / len(defined), len(defined)


def aggregate(rows: list[MetricRow], scope: str) -> list[AggregateRow]:
    """Unweighted per-dataset means grouped by family, transform, or overall."""
    if not rows:
        raise ReportError("no rows to aggregate")
    if scope == "per_family":
        key_fn = lambda r: (r.detector, r.family)
    elif scope == "per_transform":
        key_fn = lambda r: (r.detector, r.chain_id)
    elif scope == "overall":
        key_fn = lambda r: (r.detector, "all")
    else:
        raise ReportError(f"unknown aggregation scope {scope!r}")
    grouped: dict[tuple[str, str], list[MetricRow]] = {}
    for row in rows:
        grouped.setdefault(key_fn(row), []).append(row)
    out: list[AggregateRow] = []
    for (detector, key), members in grouped.items():
        means: dict[str, float | None] = {}
        counts: dict[str, int] = {}
        for name in METRIC_NAMES:
            means[name], counts[name] = _mean_defined([m.metric(name) for m in members])
        out.append(
            AggregateRow(
                scope=scope,
                detector=detector,
                key=key,
                means=means,
                counts=counts,
                n_datasets=len(members),
            )
        )
    return out


@dataclass(frozen=True)
class CalibrationRow:
    detector: str
    dataset: str
    chain_id: str
    acc_default: float
    acc_oracle: float
    oracle_t: float
    delta: float


def calibration_report(result: RunResult, scope: str = "per-dataset") -> list[CalibrationRow]:
    """Default-threshold vs accuracy-maximizing threshold, side by side.

    ``scope="per-dataset"`` calibrates each cell independently (delta is then
    always >= 0); ``scope="per-model"`` pools each detector's scores across
    datasets within a chain and applies the single pooled threshold, so
    per-dataset deltas may be negative.
    """
    if scope not in ("per-dataset", "per-model"):
        raise ReportError(f"unknown calibration scope {scope!r}")
    if not result.completed:
        raise ReportError("no completed cells to report on")
    pooled_t: dict[tuple[str, str], float] = {}
    if scope == "per-model":
        pools: dict[tuple[str, str], list] = {}
        for cell in result.completed:
            pools.setdefault((cell.detector_id, cell.chain_id), []).append(cell)
        for key, cells in pools.items():
            entries = []
            for cell in cells:
                entries.extend(
                    ScoreEntry(id=f"{cell.cell_id}/{e.id}", score=e.score, label=e.label)
                    for e in result.load_scores(cell).entries
                )
            pooled_t[key], _ = oracle_threshold(ScoreSet(entries=tuple(entries)))
    rows: list[CalibrationRow] = []
    for cell in result.completed:
        scores = result.load_scores(cell)
        acc_default = accuracy(confusion_at(scores, DEFAULT_THRESHOLD))
        if scope == "per-model":
            t = pooled_t[(cell.detector_id, cell.chain_id)]
            acc_o = accuracy(confusion_at(scores, t))
        else:
            t, acc_o = oracle_threshold(scores)
        rows.append(
            CalibrationRow(
                detector=cell.detector_id,
                dataset=cell.manifest_name,
                chain_id=cell.chain_id,
                acc_default=acc_default,
                acc_oracle=acc_o,
                oracle_t=t,
                delta=acc_o - acc_default,
            )
        )
    return rows


def transform_report(result: RunResult, threshold: float = DEFAULT_THRESHOLD) -> list[AggregateRow]:
    """Per-(detector, chain) acc/tpr/tnr averaged across datasets."""
    rows = metric_table(result, threshold)
    chains = {r.chain_id for r in rows}
    if IDENTITY_CHAIN_ID not in chains:
        logger.warning("transform report has no identity-chain baseline")
    return aggregate(rows, "per_transform")


# ---------------------------------------------------------------------------
# Rendering

def _format_cell(value, markdown: bool) -> str:
    if value is None:
        return "—" if markdown else ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render(table: Table, format: str) -> bytes:
    """Byte-deterministic CSV or Markdown rendering of a table."""
    if not table.rows:
        raise ReportError("refusing to render an empty table")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_format_cell(v, markdown=False) for v in row])
        return buf.getvalue().encode("utf-8")
    if format == "markdown":
        lines = [
            "| " + " | ".join(table.columns) + " |",
            "| " + " | ".join("---" for _ in table.columns) + " |",
        ]
        for row in table.rows:
            lines.append("| " + " | ".join(_format_cell(v, markdown=True) for v in row) + " |")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ReportError(f"unknown render format {format!r}")


def metrics_table_for_render(rows: list[MetricRow]) -> Table:
    return Table(
        columns=(
            "detector", "dataset", "family", "chain", "threshold",
            "acc", "ap", "tpr", "tnr", "auc", "n_real", "n_fake",
        ),
        rows=tuple(
            (
                r.detector, r.dataset, r.family, r.chain_id, r.threshold_used,
                r.acc, r.ap, r.tpr, r.tnr, r.auc, r.n_real, r.n_fake,
            )
            for r in rows
        ),
    )


def aggregates_table_for_render(rows: list[AggregateRow]) -> Table:
    return Table(
        columns=(
            "scope", "detector", "key",
            "acc", "ap", "tpr", "tnr", "auc",
            "n_datasets", "n_acc", "n_ap", "n_tpr", "n_tnr", "n_auc",
        ),
        rows=tuple(
            (
                r.scope, r.detector, r.key,
                r.means["acc"], r.means["ap"], r.means["tpr"], r.means["tnr"], r.means["auc"],
                r.n_datasets,
                r.counts["acc"], r.counts["ap"], r.counts["tpr"], r.counts["tnr"], r.counts["auc"],
            )
            for r in rows
        ),
    )


def calibration_table_for_render(rows: list[CalibrationRow]) -> Table:
    return Table(
        columns=(
            "detector", "dataset", "chain",
            "acc_default", "acc_oracle", "oracle_threshold", "delta",
        ),
        rows=tuple(
            (r.detector, r.dataset, r.chain_id, r.acc_default, r.acc_oracle, r.oracle_t, r.delta)
            for r in rows
        ),
    )


def figure_data_table(rows: list[MetricRow]) -> Table:
    """Long-format (detector, dataset, chain, metric, value) for plotting."""
    out = []
    for r in rows:
        for name in METRIC_NAMES:
            value = r.metric(name)
            if value is not None:
                out.append((r.detector, r.dataset, r.chain_id, name, value))
    return Table(columns=("detector", "dataset", "chain", "metric", "value"), rows=tuple(out))


def write_reports(
    result: RunResult,
    out_dir,
    threshold: float | str = DEFAULT_THRESHOLD,
    group_by_family: bool = True,
    calibration_scope: str = "per-dataset",
) -> list[str]:
    """Emit the full report set; returns the written file names."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = metric_table(result, threshold)
    agg_rows = aggregate(rows, "overall")
    if group_by_family:
        agg_rows = aggregate(rows, "per_family") + agg_rows
    cal_rows = calibration_report(result, scope=calibration_scope)
    tr_threshold = DEFAULT_THRESHOLD if isinstance(threshold, str) else float(threshold)
    tr_rows = transform_report(result, tr_threshold)

    written: list[str] = []

    def emit(name: str, table: Table) -> None:
        for fmt, ext in (("csv", "csv"), ("markdown", "md")):
            path = out_dir / f"{name}.{ext}"
            path.write_bytes(render(table, fmt))
            written.append(path.name)

    emit("report_metrics", metrics_table_for_render(rows))
    emit("report_calibration", calibration_table_for_render(cal_rows))
    emit("report_transforms", aggregates_table_for_render(tr_rows))
    emit("report_aggregates", aggregates_table_for_render(agg_rows))
    figure_path = out_dir / "report_figure_data.csv"
    figure_path.write_bytes(render(figure_data_table(rows), "csv"))
    written.append(figure_path.name)
    return written
