"""Figures and tables computed from a record store.

Every figure is accompanied by a CSV holding exactly the numbers drawn, and
every output is a deterministic function of the records and options.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from dve.errors import EmptyAggregate, MissingSlice
from dve.estimators import EstimatorId
from dve.harness import EstimateRecord, RecordStore
from dve.metrics import (
    CellKey,
    CellStats,
    aggregate_cell,
    gamma_regions,
    normalized_bias,
    ratio_error,
    region_summary,
    skew_regions,
)
from dve.svg import SVG

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000",
)
BIAS_LOW, BIAS_HIGH = -1.0, 3.0
DEFAULT_TARGETS = (("max", 5.0), ("max", 2.0), ("avg", 5.0), ("avg", 2.0))


def load_records(path) -> list[EstimateRecord]:
    """Records from a store directory or a ``records.csv`` path."""
    path = Path(path)
    store = RecordStore(path if path.is_dir() else path.parent)
    if path.is_file():
        store.records_path = path
    if not store.records_path.exists():
        raise MissingSlice(f"no records.csv under {path}")
    records = store.load()
    if not records:
        raise MissingSlice(f"{store.records_path} holds no records")
    return records


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=0.0)


def _estimator_order(name: str) -> int:
    try:
        return list(EstimatorId).index(EstimatorId(name))
    except ValueError:
        return len(EstimatorId)


def cell_stats(records: Iterable[EstimateRecord]) -> tuple[dict, dict]:
    """``(stats, gamma)``: CellStats per ``(CellKey, estimator)`` and true gamma^2 per cell."""
    estimates: dict[tuple, list] = defaultdict(list)
    truth: dict[CellKey, tuple[int, float]] = {}
    for r in records:
        key = CellKey(r.N, r.A, r.theta, r.q)
        estimates[(key, r.estimator)].append(r.estimate)
        truth[key] = (r.D_true, r.gamma_sq_true)
    stats = {}
    for (key, est), values in estimates.items():
        try:
            stats[(key, est)] = aggregate_cell(values, truth[key][0])
        except EmptyAggregate:
            continue
    return stats, {k: g for k, (_, g) in truth.items()}


@dataclass(frozen=True)
class GridLayout:
    """Rows are population sizes (largest on top); columns are N/A ascending."""

    rows: tuple[int, ...]
    cols: tuple[float, ...]
    cells: dict = field(hash=False)

    @classmethod
    def from_regimes(cls, regimes: Iterable[tuple[int, int]]) -> "GridLayout":
        regimes = sorted(set(regimes))
        rows = tuple(sorted({N for N, _ in regimes}, reverse=True))
        cols = tuple(sorted({round(N / A, 9) for N, A in regimes}))
        cells = {(rows.index(N), cols.index(round(N / A, 9))): (N, A) for N, A in regimes}
        return cls(rows, cols, cells)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.cols)


def _fmt_int(x: int) -> str:
    for div, suffix in ((10**9, "B"), (10**6, "M"), (10**3, "K")):
        if x >= div and x % div == 0:
            return f"{x // div}{suffix}"
    return str(x)


def _fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return repr(float(x))


# -- 2D estimate-vs-actual grids ---------------------------------------------


def emit_2d_grid(
    records: Sequence[EstimateRecord],
    estimators: Sequence[str],
    q: float,
    out_path,
) -> Path:
    """Grid of log-log plots of mean estimate vs true D across theta, one per regime.

    Also writes ``<out_path>.csv`` with the plotted points.
    """
    estimators = [str(e) for e in estimators]
    if not estimators:
        raise MissingSlice("no estimators requested")
    rows = [r for r in records if _same(r.q, q) and r.estimator in estimators]
    if not rows:
        raise MissingSlice(f"records contain no data at q={q} for {estimators}")
    points: dict[tuple, list] = defaultdict(list)
    truth = {}
    for r in rows:
        points[(r.N, r.A, r.theta, r.estimator)].append(r.estimate)
        truth[(r.N, r.A, r.theta)] = r.D_true
    means = {
        k: math.fsum(ok) / len(ok)
        for k, v in points.items()
        if (ok := [e for e in v if e is not None])
    }
    layout = GridLayout.from_regimes((N, A) for N, A, _ in truth)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["N", "A", "theta", "estimator", "D_true", "mean_estimate"])
        for (N, A, theta, est) in sorted(means, key=lambda k: (-k[0], -k[1], k[2], _estimator_order(k[3]))):
            writer.writerow([N, A, repr(theta), est, truth[(N, A, theta)], _fmt(means[(N, A, theta, est)])])

    pw, ph, pad, top = 190.0, 160.0, 40.0, 70.0
    nrows, ncols = layout.shape
    svg = SVG(pad + ncols * (pw + pad), top + nrows * (ph + pad) + 20,
              title=f"estimate vs actual distinct values, q={q}")
    svg.text(pad, 20, f"Mean estimate vs actual D (log-log), q = {q}", size=14)
    for k, est in enumerate(estimators):
        x = pad + k * 80
        svg.line(x, 38, x + 18, 38, stroke=PALETTE[k % len(PALETTE)], stroke_width=2)
        svg.text(x + 22, 42, est, size=11)
    svg.text(pad + 600, 42, "dashed: y = x", size=11)

    for (ri, ci), (N, A) in sorted(layout.cells.items()):
        x0 = pad + ci * (pw + pad)
        y0 = top + ri * (ph + pad)
        thetas = sorted({t for (n, a, t) in truth if (n, a) == (N, A)})
        vals = [truth[(N, A, t)] for t in thetas]
        vals += [means[(N, A, t, e)] for t in thetas for e in estimators if (N, A, t, e) in means]
        lo = math.log10(min(vals)) - 0.1
        hi = math.log10(max(vals)) + 0.1
        if hi - lo < 1.0:
            mid = (hi + lo) / 2
            lo, hi = mid - 0.5, mid + 0.5

        def px(v, _lo=lo, _hi=hi, _x0=x0):
            return _x0 + (math.log10(v) - _lo) / (_hi - _lo) * pw

        def py(v, _lo=lo, _hi=hi, _y0=y0):
            return _y0 + ph - (math.log10(v) - _lo) / (_hi - _lo) * ph

        svg.rect(x0, y0, pw, ph, stroke="#444444")
        svg.text(x0 + pw / 2, y0 - 6, f"N={_fmt_int(N)}, A={_fmt_int(A)} (N/A={N / A:g})",
                 size=10, anchor="middle")
        svg.line(x0, y0 + ph, x0 + pw, y0, stroke="#999999", stroke_dasharray="4,3")
        for e_idx, est in enumerate(estimators):
            color = PALETTE[e_idx % len(PALETTE)]
            pts = [(px(truth[(N, A, t)]), py(means[(N, A, t, est)]))
                   for t in thetas if (N, A, t, est) in means]
            if len(pts) > 1:
                svg.polyline(pts, stroke=color, stroke_width=1.2)
            for x, y in pts:
                svg.circle(x, y, 2.5, fill=color)
        svg.text(x0 + pw / 2, y0 + ph + 14, f"actual D  [10^{lo:.1f}, 10^{hi:.1f}]",
                 size=9, anchor="middle")
    svg.save(out_path)
    return out_path


# -- normalized bias surfaces ---------------------------------------------------


def bias_color(bias: float) -> str:
    """Diverging scale: -1 blue, 0 white, 3 red; clipped outside [-1, 3]."""
    if bias is None or math.isnan(bias):
        return "#bbbbbb"
    b = min(max(bias, BIAS_LOW), BIAS_HIGH)
    if b < 0:
        t, target = b / BIAS_LOW, (33, 102, 172)
    else:
        t, target = b / BIAS_HIGH, (178, 24, 43)
    rgb = [round(255 + (c - 255) * t) for c in target]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


@dataclass
class BiasSurface:
    estimator: str
    thetas: list[float]
    qs: list[float]
    matrices: dict[tuple[int, int], list[list[float]]]
    csv_paths: list[Path]
    svg_path: Path


def bias_matrices(records: Iterable[EstimateRecord], estimator: str):
    """Mean normalized bias per regime as a theta x q matrix (NaN where every rep failed)."""
    sums: dict[tuple, list] = defaultdict(list)
    for r in records:
        if r.estimator == estimator and r.estimate is not None:
            sums[(r.N, r.A, r.theta, r.q)].append(normalized_bias(r.estimate, r.D_true))
    regimes = sorted({(r.N, r.A) for r in records if r.estimator == estimator})
    thetas = sorted({r.theta for r in records if r.estimator == estimator})
    qs = sorted({r.q for r in records if r.estimator == estimator})
    out = {}
    for N, A in regimes:
        out[(N, A)] = [
            [
                math.fsum(v) / len(v) if (v := sums.get((N, A, t, q))) else math.nan
                for q in qs
            ]
            for t in thetas
        ]
    return thetas, qs, out


def emit_bias_surface(records: Sequence[EstimateRecord], estimator: str, out_dir) -> BiasSurface:
    estimator = str(estimator)
    thetas, qs, matrices = bias_matrices(records, estimator)
    if len(thetas) < 2 or len(qs) < 2:
        raise MissingSlice(
            f"bias surface for {estimator} needs >= 2 theta and >= 2 q values "
            f"(have {len(thetas)} and {len(qs)})"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_paths = []
    for (N, A), mat in sorted(matrices.items(), key=lambda kv: (-kv[0][0], -kv[0][1])):
        path = out_dir / f"bias_{estimator}_N{N}_A{A}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["theta\\q"] + [repr(q) for q in qs])
            for t, row in zip(thetas, mat):
                writer.writerow([repr(t)] + [_fmt(v) for v in row])
        csv_paths.append(path)

    layout = GridLayout.from_regimes(matrices)
    cw, ch = 22.0, 18.0
    pw, ph = cw * len(qs), ch * len(thetas)
    pad, left, top = 50.0, 60.0, 80.0
    nrows, ncols = layout.shape
    width = left + ncols * (pw + pad) + 120
    svg = SVG(width, top + nrows * (ph + pad) + 40,
              title=f"normalized bias surfaces for {estimator}")
    svg.text(left, 22, f"Mean normalized bias (est - D)/D for {estimator}: rows theta "
                       f"{thetas[0]:g}..{thetas[-1]:g} (top to bottom), columns q ascending", size=13)
    svg.comment("colour scale: -1 -> #2166ac, 0 -> #ffffff, 3 -> #b2182b; linear in between, clipped")
    for (ri, ci), (N, A) in sorted(layout.cells.items()):
        x0 = left + ci * (pw + pad)
        y0 = top + ri * (ph + pad)
        svg.text(x0 + pw / 2, y0 - 6, f"N={_fmt_int(N)}, A={_fmt_int(A)}", size=10, anchor="middle")
        for ti, row in enumerate(matrices[(N, A)]):
            for qi, v in enumerate(row):
                svg.rect(x0 + qi * cw, y0 + ti * ch, cw, ch, fill=bias_color(v),
                         stroke="#ffffff", stroke_width=0.5)
        svg.rect(x0, y0, pw, ph, stroke="#444444")
    # legend
    lx, ly = left + ncols * (pw + pad), top
    svg.text(lx, ly - 10, "bias", size=11)
    steps = 40
    for k in range(steps):
        b = BIAS_HIGH - (BIAS_HIGH - BIAS_LOW) * k / (steps - 1)
        svg.rect(lx, ly + k * 5, 16, 5, fill=bias_color(b))
    for mark in (-1, 0, 1, 2, 3):
        y = ly + (BIAS_HIGH - mark) / (BIAS_HIGH - BIAS_LOW) * (steps - 1) * 5 + 2.5
        svg.line(lx + 16, y, lx + 22, y, stroke="#000000",
                 stroke_dasharray=None if mark in (-1, 0, 3) else "2,2")
        svg.text(lx + 25, y + 3, f"{mark:g}", size=9)
    svg.text(lx, ly + steps * 5 + 18, "q: " + ", ".join(f"{q:g}" for q in qs), size=9)
    svg_path = out_dir / f"bias_{estimator}.svg"
    svg.save(svg_path)
    return BiasSurface(estimator, thetas, qs, matrices, csv_paths, svg_path)


# -- tables ---------------------------------------------------------------------


def _write_table(rows: list[dict], columns: list[str], base: Path, title: str) -> list[Path]:
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    json_path = base.with_suffix(".json")
    json_path.write_text(json.dumps({"title": title, "columns": columns, "rows": rows}, indent=2) + "\n")
    txt_path = base.with_suffix(".txt")
    txt_path.write_text(format_text_table(rows, columns, title))
    return [csv_path, json_path, txt_path]


def format_text_table(rows: list[dict], columns: list[str], title: str = "") -> str:
    cells = [[str(r.get(c, "")) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = [title] if title else []
    lines.append("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)
    return "\n".join(lines) + "\n"


@dataclass
class ThresholdTable:
    estimators: list[str]
    qs: list[float]
    rows: list[dict]

    def value(self, statistic: str, level: float, estimator: str) -> Optional[float]:
        for row in self.rows:
            if row["statistic"] == statistic and row["level"] == level:
                v = row[estimator]
                return None if v == "na" else float(v)
        raise KeyError((statistic, level))

    def columns(self) -> list[str]:
        return ["error", "statistic", "level"] + self.estimators

    def to_text(self) -> str:
        return format_text_table(self.rows, self.columns(),
                                 "Sampling fraction required for max/avg ratio error")

    def write(self, base) -> list[Path]:
        return _write_table(self.rows, self.columns(), Path(base),
                            "Sampling fraction required for max/avg ratio error")


def emit_threshold_table(
    records: Sequence[EstimateRecord],
    targets: Sequence[tuple[str, float]] = DEFAULT_TARGETS,
    estimators: Optional[Sequence[str]] = None,
) -> ThresholdTable:
    """Smallest grid q at which the max (or mean) ratio error over every
    experiment at that q is within the level; ``"na"`` if no q qualifies.

    A failed estimate counts as an unbounded ratio error.
    """
    present = {r.estimator for r in records}
    names = [str(e) for e in estimators] if estimators else sorted(present, key=_estimator_order)
    qs = sorted({r.q for r in records})
    errors: dict[tuple[str, float], list[float]] = defaultdict(list)
    for r in records:
        errors[(r.estimator, r.q)].append(
            math.inf if r.estimate is None else ratio_error(r.estimate, r.D_true)
        )
    rows = []
    for statistic, level in targets:
        if statistic not in ("max", "avg"):
            raise ValueError(f"statistic must be 'max' or 'avg', got {statistic!r}")
        row = {"error": f"{statistic.capitalize()} {level:g}", "statistic": statistic, "level": level}
        for est in names:
            found = "na"
            for q in qs:
                vals = errors.get((est, q))
                if not vals:
                    continue
                stat = max(vals) if statistic == "max" else math.fsum(vals) / len(vals)
                if stat <= level:
                    found = repr(q)
                    break
            row[est] = found
        rows.append(row)
    return ThresholdTable(names, qs, rows)


def _band_table(stats, gamma, regions, metric: str, estimators: list[str]):
    rows: dict[tuple, dict] = {}
    columns = ["band", "N/A"]
    for region in regions:
        band, ucs, qband = region.name.split("|")
        try:
            summary = region_summary(stats, gamma, region, name=region.name, estimators=estimators)
        except EmptyAggregate:
            continue
        row = rows.setdefault((band, ucs), {"band": band, "N/A": ucs})
        for s in summary:
            col = f"{qband}:{s.estimator}"
            row[col] = f"{getattr(s, metric):.2f}"
    for qband in dict.fromkeys(r.name.split("|")[2] for r in regions):
        columns += [f"{qband}:{e}" for e in estimators]
    used = [c for c in columns if c in ("band", "N/A") or any(c in r for r in rows.values())]
    return list(rows.values()), used


def emit_summary_tables(
    records: Sequence[EstimateRecord],
    out_dir,
    estimators: Optional[Sequence[str]] = None,
) -> dict[str, list[Path]]:
    """Ratio-error and percentage-bias tables by skew and N/A bands, and percentage
    RMSE by gamma^2 and N/A bands, each split into low and high q bands."""
    stats, gamma = cell_stats(records)
    present = {e for (_, e) in stats}
    names = [str(e) for e in estimators] if estimators else sorted(present, key=_estimator_order)
    out_dir = Path(out_dir)
    written = {}
    specs = [
        ("ratio_error", skew_regions(), "mean_ratio_error", "Mean ratio error vs skew and N/A"),
        ("pct_bias", skew_regions(), "pct_bias", "Percentage bias vs skew and N/A"),
        ("pct_rmse", gamma_regions(), "pct_rmse", "Percentage RMSE vs gamma^2 and N/A"),
    ]
    for stem, regions, metric, title in specs:
        rows, columns = _band_table(stats, gamma, regions, metric, names)
        written[stem] = _write_table(rows, columns, out_dir / stem, title)
    return written


def emit_tables(records: Sequence[EstimateRecord], out_dir,
                estimators: Optional[Sequence[str]] = None) -> dict[str, list[Path]]:
    written = emit_summary_tables(records, out_dir, estimators)
    written["thresholds"] = emit_threshold_table(records, estimators=estimators).write(
        Path(out_dir) / "thresholds")
    return written
