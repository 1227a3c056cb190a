"""Error metrics and their aggregation per cell and per parameter region."""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

from dve.errors import EmptyAggregate, InvalidEstimate


def normalized_bias(estimate: float, D: int) -> float:
    """``(estimate - D) / D``."""
    return (estimate - D) / D


def ratio_error(estimate: float, D: int) -> float:
    """Symmetric multiplicative error ``max(est/D, D/est)``; always >= 1."""
    if not estimate > 0:
        raise InvalidEstimate(f"ratio error needs a positive estimate, got {estimate}")
    return max(estimate / D, D / estimate)


@dataclass(frozen=True)
class CellKey:
    N: int
    A: int
    theta: float
    q: float

    @property
    def uniform_class_size(self) -> float:
        return self.N / self.A


@dataclass(frozen=True)
class CellStats:
    """Statistics of one estimator over the repetitions of one cell.

    Percentages are of the true ``D``.  ``pct_rmse`` is the root mean square of
    the per-repetition normalized errors; ``pct_bias`` is their signed mean.
    Failed repetitions are counted in ``failures`` and excluded elsewhere.
    """

    mean_estimate: float
    mean_normalized_bias: float
    pct_bias: float
    max_ratio_error: float
    mean_ratio_error: float
    pct_rmse: float
    estimate_variance: float
    reps: int
    failures: int = 0


def aggregate_cell(estimates: Sequence[Optional[float]], D: int) -> CellStats:
    """Aggregate the estimates of one (cell, estimator); ``None`` marks a failure."""
    ok = [e for e in estimates if e is not None]
    failures = len(estimates) - len(ok)
    if not ok:
        raise EmptyAggregate("no successful estimates to aggregate")
    biases = [normalized_bias(e, D) for e in ok]
    ratios = [ratio_error(e, D) for e in ok]
    mean_bias = math.fsum(biases) / len(biases)
    return CellStats(
        mean_estimate=math.fsum(ok) / len(ok),
        mean_normalized_bias=mean_bias,
        pct_bias=100.0 * mean_bias,
        max_ratio_error=max(ratios),
        mean_ratio_error=math.fsum(ratios) / len(ratios),
        pct_rmse=100.0 * math.sqrt(math.fsum(b * b for b in biases) / len(biases)),
        estimate_variance=statistics.variance(ok) if len(ok) > 1 else 0.0,
        reps=len(ok),
        failures=failures,
    )


@dataclass(frozen=True)
class Region:
    """Named predicate over ``(theta, N/A, q, gamma_sq)``; bounds are inclusive
    unless listed in ``open_bounds`` (e.g. ``{"gamma_sq_hi"}``)."""

    name: str
    theta: tuple[float, float] = (-math.inf, math.inf)
    uniform_class_size: tuple[float, float] = (-math.inf, math.inf)
    q: tuple[float, float] = (-math.inf, math.inf)
    gamma_sq: tuple[float, float] = (-math.inf, math.inf)
    open_bounds: frozenset = frozenset()

    def _inside(self, label: str, value: float, bounds: tuple[float, float]) -> bool:
        lo, hi = bounds
        if label + "_lo" in self.open_bounds:
            if not value > lo:
                return False
        elif value < lo:
            return False
        if label + "_hi" in self.open_bounds:
            return value < hi
        return value <= hi

    def __call__(self, theta: float, uniform_class_size: float, q: float, gamma_sq: float) -> bool:
        return (
            self._inside("theta", theta, self.theta)
            and self._inside("ucs", uniform_class_size, self.uniform_class_size)
            and self._inside("q", q, self.q)
            and self._inside("gamma_sq", gamma_sq, self.gamma_sq)
        )


# Bands of the published summary tables.  N/A bands overlap on 100.
THETA_BANDS = {"0<=theta<=1": (0.0, 1.0), "1.5<=theta<=2": (1.5, 2.0)}
UCS_BANDS = {"N/A<=100": (0.0, 100.0), "N/A>=100": (100.0, math.inf)}
Q_BANDS = {"0.001<=q<=0.005": (0.001, 0.005), "0.01<=q<=0.1": (0.01, 0.1)}
GAMMA_BANDS = {
    "0<=gamma2<1": ((0.0, 1.0), frozenset({"gamma_sq_hi"})),
    "1<=gamma2<=50": ((1.0, 50.0), frozenset()),
    "gamma2>50": ((50.0, math.inf), frozenset({"gamma_sq_lo"})),
}


def skew_regions() -> list[Region]:
    """theta x N/A x q regions (ratio-error and bias tables)."""
    return [
        Region(f"{t}|{u}|{qn}", theta=tb, uniform_class_size=ub, q=qb)
        for qn, qb in Q_BANDS.items()
        for t, tb in THETA_BANDS.items()
        for u, ub in UCS_BANDS.items()
    ]


def gamma_regions() -> list[Region]:
    """gamma^2 x N/A x q regions (RMSE table)."""
    return [
        Region(f"{g}|{u}|{qn}", uniform_class_size=ub, q=qb, gamma_sq=gb, open_bounds=ob)
        for qn, qb in Q_BANDS.items()
        for g, (gb, ob) in GAMMA_BANDS.items()
        for u, ub in UCS_BANDS.items()
    ]


@dataclass(frozen=True)
class SummaryRow:
    region: str
    estimator: str
    cells: int
    mean_ratio_error: float
    max_ratio_error: float
    pct_bias: float
    pct_rmse: float

    def as_dict(self) -> dict:
        return asdict(self)


def region_summary(
    stats: Mapping[tuple[CellKey, str], CellStats],
    gamma_sq: Mapping[CellKey, float] | Callable[[CellKey], float],
    region: Callable[[float, float, float, float], bool],
    name: Optional[str] = None,
    estimators: Optional[Iterable[str]] = None,
) -> list[SummaryRow]:
    """Average cell metrics per estimator over the cells matching ``region``.

    ``gamma_sq`` gives the true population gamma^2 of each cell.
    """
    lookup = gamma_sq if callable(gamma_sq) else gamma_sq.__getitem__
    wanted = set(estimators) if estimators is not None else None
    grouped: dict[str, list[CellStats]] = {}
    for (key, est), cs in stats.items():
        if wanted is not None and est not in wanted:
            continue
        if region(key.theta, key.uniform_class_size, key.q, lookup(key)):
            grouped.setdefault(est, []).append(cs)
    if not grouped:
        raise EmptyAggregate(f"region {name or region!r} matches no cells")
    label = name or getattr(region, "name", "region")
    rows = []
    for est, cells in grouped.items():
        k = len(cells)
        rows.append(
            SummaryRow(
                region=label,
                estimator=est,
                cells=k,
                mean_ratio_error=math.fsum(c.mean_ratio_error for c in cells) / k,
                max_ratio_error=max(c.max_ratio_error for c in cells),
                pct_bias=math.fsum(c.pct_bias for c in cells) / k,
                pct_rmse=math.fsum(c.pct_rmse for c in cells) / k,
            )
        )
    return rows
