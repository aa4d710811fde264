from __future__ import annotations

import json
from pathlib import Path

import pytest

from sidbench.report import (
    MetricRow,
    ReportError,
    Table,
    aggregate,
    calibration_report,
    figure_data_table,
    metric_table,
    render,
    transform_report,
    write_reports,
)
from sidbench.runner import CellResult, RunResult


def fake_run(tmp_path: Path, cells: dict[str, list[tuple[str, float, str]]]) -> RunResult:
    """Synthesize a run directory: cells maps cell spec to score entries.

    Cell spec: "detector|dataset|family|chain".
    """
    run_dir = tmp_path / "run"
    (run_dir / "scores").mkdir(parents=True, exist_ok=True)
    out = RunResult(run_dir=run_dir)
    for spec, entries in cells.items():
        detector, dataset, family, chain = spec.split("|")
        cell_id = f"{detector}__{dataset}__{chain}"
        rel = f"scores/{cell_id}.jsonl"
        with open(run_dir / rel, "w", encoding="utf-8") as fh:
            for i, (eid, score, label) in enumerate(entries):
                fh.write(json.dumps({"id": eid, "score": score, "label": label}) + "\n")
        n_fake = sum(1 for _, _, l in entries if l == "fake")
        out.cells.append(
            CellResult(
                cell_id=cell_id,
                detector=detector,
                detector_id=detector,
                manifest_path=dataset,
                manifest_name=dataset,
                family=family,
                chain_id=chain,
                preprocess_tag="",
                status="completed",
                scores_path=rel,
                n_images=len(entries),
                n_real=len(entries) - n_fake,
                n_fake=n_fake,
                wall_time_secs=0.0,
                cache_hits=0,
            )
        )
    return out


SEPARATED = [("a", 0.1, "real"), ("b", 0.2, "real"), ("c", 0.8, "fake"), ("d", 0.9, "fake")]
WORKED = [("a", 0.9, "fake"), ("b", 0.8, "real"), ("c", 0.7, "fake"), ("d", 0.6, "fake")]
ALL_EQUAL = [("a", 0.5, "fake"), ("b", 0.5, "real")]


class TestMetricTable:
    def test_perfect_cell(self, tmp_path):
        result = fake_run(tmp_path, {"det|ds|fam|identity": SEPARATED})
        rows = metric_table(result)
        assert len(rows) == 1
        r = rows[0]
        assert (r.acc, r.ap, r.tpr, r.tnr, r.auc) == (1.0, 1.0, 1.0, 1.0, 1.0)
        assert r.threshold_used == 0.5
        assert (r.n_real, r.n_fake) == (2, 2)

    def test_oracle_mode_dominates_default(self, tmp_path):
        result = fake_run(
            tmp_path,
            {
                "det|ds1|fam|identity": WORKED,
                "det|ds2|fam|identity": SEPARATED,
                "det|ds3|fam|identity": ALL_EQUAL,
            },
        )
        default_rows = {r.dataset: r for r in metric_table(result, 0.5)}
        oracle_rows = {r.dataset: r for r in metric_table(result, "oracle")}
        for ds, row in oracle_rows.items():
            assert row.acc >= default_rows[ds].acc
            assert row.threshold_used == pytest.approx(row.threshold_used)

    def test_single_class_cells_get_none(self, tmp_path):
        result = fake_run(
            tmp_path, {"det|ds|fam|identity": [("a", 0.9, "fake"), ("b", 0.1, "fake")]}
        )
        r = metric_table(result)[0]
        assert r.tnr is None and r.auc is None
        assert r.ap == 1.0

    def test_no_completed_cells_rejected(self, tmp_path):
        result = RunResult(run_dir=tmp_path)
        with pytest.raises(ReportError):
            metric_table(result)


class TestAggregate:
    def rows(self):
        base = dict(chain_id="identity", threshold_used=0.5, ap=None, tpr=None, tnr=None, auc=None, n_real=1, n_fake=1)
        return [
            MetricRow(detector="d", dataset="ds1", family="gan", acc=0.6, **base),
            MetricRow(detector="d", dataset="ds2", family="gan", acc=0.8, **base),
            MetricRow(detector="d", dataset="ds3", family="diff", acc=0.5, **base),
        ]

    def test_family_mean(self):
        rows = aggregate(self.rows(), "per_family")
        gan = next(r for r in rows if r.key == "gan")
        assert gan.means["acc"] == pytest.approx(0.7)
        assert gan.n_datasets == 2

    def test_overall_equals_mean_of_rows(self):
        rows = aggregate(self.rows(), "overall")
        assert len(rows) == 1
        assert rows[0].means["acc"] == pytest.approx((0.6 + 0.8 + 0.5) / 3, abs=1e-12)
        assert rows[0].n_datasets == 3

    def test_undefined_members_excluded_with_count(self):
        base = dict(chain_id="identity", threshold_used=0.5, ap=None, tpr=None, auc=None, n_real=1, n_fake=1)
        rows = [
            MetricRow(detector="d", dataset="ds1", family="g", acc=0.6, tnr=0.9, **base),
            MetricRow(detector="d", dataset="ds2", family="g", acc=0.8, tnr=None, **base),
        ]
        agg = aggregate(rows, "per_family")[0]
        assert agg.means["tnr"] == pytest.approx(0.9)
        assert agg.counts["tnr"] == 1
        assert agg.counts["acc"] == 2

    def test_unknown_scope_rejected(self):
        with pytest.raises(ReportError):
            aggregate(self.rows(), "per_planet")


class TestCalibration:
    def test_perfect_cell_delta_zero(self, tmp_path):
        result = fake_run(tmp_path, {"det|ds|fam|identity": SEPARATED})
        row = calibration_report(result)[0]
        assert row.acc_default == 1.0 and row.acc_oracle == 1.0 and row.delta == 0.0

    def test_all_equal_scores_delta_zero(self, tmp_path):
        result = fake_run(tmp_path, {"det|ds|fam|identity": ALL_EQUAL})
        row = calibration_report(result)[0]
        assert row.acc_default == 0.5 and row.delta == 0.0

    def test_worked_set_three_quarters_both(self, tmp_path):
        # at 0.5 everything is predicted fake: tp=3, fp=1 -> 3/4; the oracle
        # can do no better, so the delta is zero
        result = fake_run(tmp_path, {"det|ds|fam|identity": WORKED})
        row = calibration_report(result)[0]
        assert row.acc_default == pytest.approx(3 / 4)
        assert row.acc_oracle == pytest.approx(3 / 4)
        assert row.delta == 0.0

    def test_delta_nonnegative_everywhere(self, tmp_path):
        result = fake_run(
            tmp_path,
            {
                "det|ds1|fam|identity": WORKED,
                "det|ds2|fam|identity": SEPARATED,
                "det|ds3|fam|identity": ALL_EQUAL,
            },
        )
        assert all(r.delta >= 0 for r in calibration_report(result))

    def test_per_model_scope_pools(self, tmp_path):
        result = fake_run(
            tmp_path,
            {
                "det|ds1|fam|identity": SEPARATED,
                "det|ds2|fam|identity": [("e", 0.3, "real"), ("f", 0.7, "fake")],
            },
        )
        rows = calibration_report(result, scope="per-model")
        assert len({r.oracle_t for r in rows}) == 1  # one pooled threshold


class TestTransformReport:
    def grid_run(self, tmp_path):
        cells = {}
        for chain in ("identity", "blur:sigma=2", "jpeg:q=50"):
            for ds in ("ds1", "ds2"):
                cells[f"det|{ds}|fam|{chain}"] = [("a", 1.0, "fake"), ("b", 1.0, "real")]
        return fake_run(tmp_path, cells)

    def test_rows_keyed_by_detector_chain(self, tmp_path):
        rows = transform_report(self.grid_run(tmp_path))
        assert {(r.detector, r.key) for r in rows} == {
            ("det", "identity"),
            ("det", "blur:sigma=2"),
            ("det", "jpeg:q=50"),
        }
        assert all(r.n_datasets == 2 for r in rows)

    def test_constant_one_is_transform_invariant(self, tmp_path):
        rows = transform_report(self.grid_run(tmp_path))
        for r in rows:
            assert r.means["tpr"] == 1.0
            assert r.means["tnr"] == 0.0

    def test_identity_consistent_with_metric_table(self, tmp_path):
        result = fake_run(tmp_path, {"det|ds|fam|identity": SEPARATED})
        table_row = metric_table(result)[0]
        agg_row = next(r for r in transform_report(result) if r.key == "identity")
        assert agg_row.means["acc"] == table_row.acc

    def test_missing_identity_warns_but_reports(self, tmp_path, caplog):
        result = fake_run(tmp_path, {"det|ds|fam|jpeg:q=50": SEPARATED})
        with caplog.at_level("WARNING"):
            rows = transform_report(result)
        assert rows
        assert any("identity" in r.message for r in caplog.records)


class TestRender:
    table = Table(
        columns=("name", "value", "note"),
        rows=(("plain", 0.80556, None), ('quo,ted"x', 1, "ok")),
    )

    def test_csv_rules(self):
        out = render(self.table, "csv").decode()
        lines = out.splitlines()
        assert lines[0] == "name,value,note"
        assert lines[1] == "plain,0.8056,"
        assert lines[2] == '"quo,ted""x",1,ok'

    def test_markdown_rules(self):
        out = render(self.table, "markdown").decode()
        lines = out.splitlines()
        assert lines[0] == "| name | value | note |"
        assert lines[2] == "| plain | 0.8056 | — |"

    def test_deterministic(self):
        assert render(self.table, "csv") == render(self.table, "csv")
        assert render(self.table, "markdown") == render(self.table, "markdown")

    def test_empty_table_rejected(self):
        with pytest.raises(ReportError):
            render(Table(columns=("a",), rows=()), "csv")

    def test_unknown_format_rejected(self):
        with pytest.raises(ReportError):
            render(self.table, "html")


class TestWriteReports:
    def test_full_set_and_regeneration_identical(self, tmp_path):
        result = fake_run(
            tmp_path,
            {
                "det|ds1|fam|identity": SEPARATED,
                "det|ds1|fam|jpeg:q=50": WORKED,
            },
        )
        out1 = tmp_path / "reports1"
        out2 = tmp_path / "reports2"
        names = write_reports(result, out1)
        assert set(names) == {
            "report_metrics.csv", "report_metrics.md",
            "report_calibration.csv", "report_calibration.md",
            "report_transforms.csv", "report_transforms.md",
            "report_aggregates.csv", "report_aggregates.md",
            "report_figure_data.csv",
        }
        write_reports(result, out2)
        for name in names:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_figure_data_long_format(self, tmp_path):
        result = fake_run(tmp_path, {"det|ds|fam|identity": SEPARATED})
        table = figure_data_table(metric_table(result))
        assert table.columns == ("detector", "dataset", "chain", "metric", "value")
        metrics = {row[3] for row in table.rows}
        assert metrics == {"acc", "ap", "tpr", "tnr", "auc"}

    def test_oracle_threshold_report(self, tmp_path):
        result = fake_run(tmp_path, {"det|ds|fam|identity": WORKED})
        out = tmp_path / "r"
        write_reports(result, out, threshold="oracle")
        text = (out / "report_metrics.csv").read_text()
        assert "det" in text
