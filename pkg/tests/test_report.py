import csv
import json
import math
from collections import defaultdict

import pytest

from dve.errors import MissingSlice
from dve.harness import EstimateRecord
from dve.metrics import aggregate_cell
from dve.report import (
    GridLayout,
    bias_color,
    emit_2d_grid,
    emit_bias_surface,
    emit_summary_tables,
    emit_tables,
    emit_threshold_table,
    load_records,
)

QS = (0.01, 0.1)
THETAS = (0.0, 2.0)


def _rec(N, A, theta, q, rep, est, estimate, D):
    return EstimateRecord(N=N, A=A, theta=theta, q=q, rep=rep, seed=rep, estimator=est,
                          estimate=estimate, error="" if estimate is not None else "x",
                          D_true=D, d_sample=1, n=1, gamma_sq_true=0.5)


@pytest.fixture
def exact_records():
    """Two regimes, an estimator exact everywhere."""
    out = []
    for N, A in ((10**4, 1000), (10**4, 100)):
        for t in THETAS:
            D = A if t == 0 else A // 2
            for q in QS:
                for rep in range(2):
                    out.append(_rec(N, A, t, q, rep, "gee", float(D), D))
    return out


def test_grid_layout_follows_table2():
    layout = GridLayout.from_regimes([(10**6, 10**5), (10**6, 10**3), (10**7, 10**6), (10**7, 10**4)])
    assert layout.rows == (10**7, 10**6)
    assert layout.cols == (10, 1000)
    assert layout.cells[(0, 0)] == (10**7, 10**6)
    assert layout.cells[(1, 1)] == (10**6, 10**3)


def test_2d_grid_points_on_reference_line(exact_records, tmp_path):
    path = emit_2d_grid(exact_records, ["gee"], 0.01, tmp_path / "g.svg")
    text = path.read_text()
    assert text.startswith("<?xml") and 'version="1.1"' in text
    with open(path.with_suffix(".csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert all(float(r["mean_estimate"]) == float(r["D_true"]) for r in rows)


def test_2d_grid_missing_slices(exact_records, tmp_path):
    with pytest.raises(MissingSlice):
        emit_2d_grid(exact_records, [], 0.01, tmp_path / "g.svg")
    with pytest.raises(MissingSlice):
        emit_2d_grid(exact_records, ["gee"], 0.5, tmp_path / "g.svg")


def test_bias_surface_exact_estimator(exact_records, tmp_path):
    surface = emit_bias_surface(exact_records, "gee", tmp_path)
    assert len(surface.csv_paths) == 2
    for mat in surface.matrices.values():
        assert all(v == 0 for row in mat for v in row)
    lines = surface.csv_paths[0].read_text().splitlines()
    assert lines[0] == "theta\\q,0.01,0.1"
    svg = surface.svg_path.read_text()
    assert svg.count(f'fill="{bias_color(0.0)}"') >= 8
    assert bias_color(0.0) == "#ffffff"


def test_bias_surface_needs_two_by_two(exact_records, tmp_path):
    thin = [r for r in exact_records if r.q == 0.01]
    with pytest.raises(MissingSlice):
        emit_bias_surface(thin, "gee", tmp_path)


def test_color_scale_pinned_and_monotone():
    assert bias_color(-1.0) == "#2166ac"
    assert bias_color(3.0) == "#b2182b"
    assert bias_color(-5.0) == bias_color(-1.0) and bias_color(9.0) == bias_color(3.0)
    red = [int(bias_color(b)[1:3], 16) - int(bias_color(b)[5:7], 16) for b in
           (-1, -0.5, 0, 0.5, 1, 2, 3)]
    assert red == sorted(red)  # red-minus-blue increases with bias


def test_threshold_table_exact_is_smallest_q(exact_records, tmp_path):
    table = emit_threshold_table(exact_records)
    for stat, level in (("max", 5.0), ("max", 2.0), ("avg", 5.0), ("avg", 2.0)):
        assert table.value(stat, level, "gee") == 0.01
    paths = table.write(tmp_path / "t")
    assert {p.suffix for p in paths} == {".csv", ".json", ".txt"}
    assert json.loads((tmp_path / "t.json").read_text())["rows"][0]["gee"] == "0.01"


def test_threshold_table_na_and_failures():
    D = 100
    recs = [_rec(1000, 10, 0.0, q, 0, "cl1", 1000.0, D) for q in QS]
    recs += [_rec(1000, 10, 0.0, q, 1, "cl1", None, D) for q in QS]
    recs += [_rec(1000, 10, 0.0, q, r, "sh", est, D) for q in QS for r, est in enumerate((150.0, 90.0))]
    table = emit_threshold_table(recs, [("max", 5.0), ("avg", 2.0)])
    assert table.value("max", 5.0, "cl1") is None
    assert "na" in table.to_text()
    assert table.value("avg", 2.0, "sh") == 0.01


def test_re_emission_is_byte_identical(exact_records, tmp_path):
    def emit(d):
        emit_2d_grid(exact_records, ["gee"], 0.1, d / "g.svg")
        emit_bias_surface(exact_records, "gee", d / "s")
        emit_tables(exact_records, d / "t")
        return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}

    assert emit(tmp_path / "a") == emit(tmp_path / "b")


def test_load_records_errors(tmp_path):
    with pytest.raises(MissingSlice):
        load_records(tmp_path)


def test_mini_surface_matches_independent_aggregation(mini_records, tmp_path):
    surface = emit_bias_surface(mini_records, "uj1", tmp_path)
    grouped = defaultdict(list)
    for r in mini_records:
        if r.estimator == "uj1":
            grouped[(r.N, r.A, r.theta, r.q)].append((r.estimate, r.D_true))
    for (N, A), mat in surface.matrices.items():
        for ti, t in enumerate(surface.thetas):
            for qi, q in enumerate(surface.qs):
                vals = grouped[(N, A, t, q)]
                ok = [e for e, _ in vals if e is not None]
                if not ok:
                    assert math.isnan(mat[ti][qi])
                    continue
                ref = aggregate_cell(ok, vals[0][1]).mean_normalized_bias
                assert mat[ti][qi] == pytest.approx(ref, rel=1e-12, abs=1e-12)
    # the CSV holds the same numbers
    path = tmp_path / "bias_uj1_N1000000_A1000.csv"
    with open(path) as fh:
        rows = list(csv.reader(fh))
    mat = surface.matrices[(10**6, 1000)]
    assert [float(x) for x in rows[1][1:]] == mat[0]


def test_mini_summary_tables(mini_records, tmp_path):
    written = emit_summary_tables(mini_records, tmp_path)
    assert set(written) == {"ratio_error", "pct_bias", "pct_rmse"}
    rows = json.loads((tmp_path / "ratio_error.json").read_text())["rows"]
    assert {r["band"] for r in rows} == {"0<=theta<=1", "1.5<=theta<=2"}
    rmse = json.loads((tmp_path / "pct_rmse.json").read_text())["rows"]
    assert {r["band"] for r in rmse} <= {"0<=gamma2<1", "1<=gamma2<=50", "gamma2>50"}


def test_uj2a_max5_threshold_on_1m_row(onem_records):
    table = emit_threshold_table(onem_records, [("max", 5.0)], ["uj2a"])
    q = table.value("max", 5.0, "uj2a")
    assert q is not None and q <= 0.05
