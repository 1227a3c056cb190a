"""Experiment grid expansion and execution.

A grid is the product regimes x thetas x qs x reps.  Each ``(N, A, theta)``
population is built once; every repetition draws its own sample with a seed
derived from the cell coordinates, then runs all requested estimators on it.
Results land in a record store (``records.csv`` + ``manifest.json``) that can be
resumed after an interruption.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Optional

from dve import __version__
from dve.errors import ConfigMismatch, EmptySample, InvalidSpec, RunAborted, UnknownPreset
from dve.estimators import EstimatorId, estimate_all
from dve.profile import ZipfSpec
from dve.sampler import GENERATOR, SampleSpec, derive_cell_seed, draw_sample
from dve.zipf import build_population

log = logging.getLogger(__name__)

RECORD_HEADER = [
    "N", "A", "theta", "q", "rep", "seed", "estimator", "estimate", "error",
    "D_true", "d_sample", "n", "gamma_sq_true", "wall_time_us",
]

PAPER_THETAS = (0.0, 0.5, 1.0, 1.5, 2.0)
# union of the protocol's q list and the 0.005 used by the summary tables
PAPER_QS = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1)
PAPER_REPS = 10
UNIFORM_CLASS_SIZES = (10, 20, 100, 200, 1000)
POPULATION_SIZES = (10**9, 10**8, 10**7, 10**6)


def table2_regimes(sizes: Iterable[int] = POPULATION_SIZES) -> list[tuple[int, int]]:
    """(N, A) pairs row by row, N descending, A descending within a row."""
    return [(N, N // u) for N in sizes for u in UNIFORM_CLASS_SIZES]


@dataclass(frozen=True)
class GridConfig:
    regimes: tuple[tuple[int, int], ...]
    thetas: tuple[float, ...] = PAPER_THETAS
    qs: tuple[float, ...] = PAPER_QS
    reps: int = PAPER_REPS
    master_seed: int = 0
    estimators: tuple[EstimatorId, ...] = tuple(EstimatorId)
    scale_divisor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple((int(N), int(A)) for N, A in self.regimes))
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "qs", tuple(float(q) for q in self.qs))
        object.__setattr__(self, "estimators", tuple(EstimatorId.parse(
            [str(e) for e in self.estimators])))
        if self.reps < 1:
            raise InvalidSpec("reps must be >= 1")
        if self.scale_divisor < 1:
            raise InvalidSpec("scale_divisor must be >= 1")
        if not self.regimes:
            raise InvalidSpec("grid needs at least one regime")
        for q in self.qs:
            if not 0 < q <= 1:
                raise InvalidSpec(f"q={q} outside (0, 1]")
        for t in self.thetas:
            if not t >= 0:
                raise InvalidSpec(f"theta={t} must be >= 0")
        for N, A in self.scaled_regimes():
            if not N >= A >= 1:
                raise InvalidSpec(f"scaled regime (N={N}, A={A}) violates N >= A >= 1")

    def scaled_regimes(self) -> list[tuple[int, int]]:
        k = self.scale_divisor
        return [(N // k, A // k) for N, A in self.regimes]

    def with_seed(self, seed: int) -> "GridConfig":
        return GridConfig(**{**self._fields(), "master_seed": seed})

    def _fields(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_dict(self) -> dict:
        return {
            "regimes": [list(r) for r in self.regimes],
            "thetas": list(self.thetas),
            "qs": list(self.qs),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "estimators": [e.value for e in self.estimators],
            "scale_divisor": self.scale_divisor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "regimes" in kwargs:
            kwargs["regimes"] = [tuple(r) for r in kwargs["regimes"]]
        return cls(**kwargs)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def expected_records(self) -> int:
        return len(self.regimes) * len(self.thetas) * len(self.qs) * self.reps * len(self.estimators)


PRESETS = {
    "paper-full": lambda: GridConfig(regimes=table2_regimes()),
    "paper-mini": lambda: GridConfig(regimes=table2_regimes(), scale_divisor=1000),
    "paper-1m-row": lambda: GridConfig(regimes=table2_regimes([10**6])),
}


def builtin_grid(preset: str) -> GridConfig:
    try:
        return PRESETS[preset]()
    except KeyError:
        raise UnknownPreset(
            f"unknown preset {preset!r}; available: {', '.join(PRESETS)}"
        ) from None


def load_config(path) -> GridConfig:
    return GridConfig.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class EstimateRecord:
    N: int
    A: int
    theta: float
    q: float
    rep: int
    seed: int
    estimator: str
    estimate: Optional[float]
    error: str
    D_true: int
    d_sample: int
    n: int
    gamma_sq_true: float
    wall_time_us: Optional[int] = field(default=None, compare=False)

    @property
    def cell(self) -> tuple[int, int, float, float]:
        return (self.N, self.A, self.theta, self.q)

    @property
    def key(self) -> tuple:
        return (self.N, self.A, self.theta, self.q, self.rep, self.estimator)

    def sort_key(self) -> tuple:
        return (self.N, self.A, self.theta, self.q, self.rep, _EST_ORDER[self.estimator])

    def to_row(self) -> list[str]:
        return [
            str(self.N), str(self.A), repr(self.theta), repr(self.q), str(self.rep),
            str(self.seed), self.estimator,
            "" if self.estimate is None else repr(self.estimate),
            self.error, str(self.D_true), str(self.d_sample), str(self.n),
            repr(self.gamma_sq_true),
            "" if self.wall_time_us is None else str(self.wall_time_us),
        ]

    @classmethod
    def from_row(cls, row: dict) -> "EstimateRecord":
        return cls(
            N=int(row["N"]), A=int(row["A"]), theta=float(row["theta"]), q=float(row["q"]),
            rep=int(row["rep"]), seed=int(row["seed"]), estimator=row["estimator"],
            estimate=float(row["estimate"]) if row["estimate"] else None,
            error=row["error"], D_true=int(row["D_true"]), d_sample=int(row["d_sample"]),
            n=int(row["n"]), gamma_sq_true=float(row["gamma_sq_true"]),
            wall_time_us=int(row["wall_time_us"]) if row["wall_time_us"] else None,
        )


_EST_ORDER = {e.value: k for k, e in enumerate(EstimatorId)}


def _run_population(
    N: int,
    A: int,
    theta: float,
    qs: tuple[float, ...],
    reps: int,
    master_seed: int,
    estimators: tuple[EstimatorId, ...],
    done: frozenset,
    timing: bool,
) -> list[EstimateRecord]:
    """All (q, rep) draws for one population; skips ``(q, rep, estimator)`` in ``done``."""
    pop = build_population(ZipfSpec(N, A, theta))
    D, g2 = pop.D, pop.gamma_sq
    out = []
    for q in qs:
        for rep in range(reps):
            todo = [e for e in estimators if (q, rep, e.value) not in done]
            if not todo:
                continue
            seed = derive_cell_seed(master_seed, (N, A, theta, q, rep))
            base = dict(N=N, A=A, theta=theta, q=q, rep=rep, seed=seed, D_true=D, gamma_sq_true=g2)
            try:
                profile = draw_sample(pop, SampleSpec(q, seed))
            except EmptySample as exc:
                out.extend(
                    EstimateRecord(estimator=e.value, estimate=None, error=exc.code,
                                   d_sample=0, n=0, **base)
                    for e in todo
                )
                continue
            for e in todo:
                start = time.perf_counter_ns()
                result = estimate_all(profile, N, q, [e])[e]
                elapsed = (time.perf_counter_ns() - start) // 1000 if timing else None
                ok = not isinstance(result, Exception)
                out.append(EstimateRecord(
                    estimator=e.value,
                    estimate=result.estimate if ok else None,
                    error="" if ok else result.code,
                    d_sample=profile.d, n=profile.n, wall_time_us=elapsed, **base,
                ))
    return out


class RecordStore:
    """Directory holding ``records.csv`` and ``manifest.json``."""

    def __init__(self, path):
        self.path = Path(path)
        self.records_path = self.path / "records.csv"
        self.manifest_path = self.path / "manifest.json"

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text())

    def config(self) -> GridConfig:
        return GridConfig.from_dict(self.manifest()["config"])

    def write_manifest(self, config: GridConfig, status: str, records: int) -> None:
        manifest = {
            "config": config.to_dict(),
            "fingerprint": config.fingerprint,
            "generator": GENERATOR,
            "version": __version__,
            "status": status,
            "records": records,
            "expected_records": config.expected_records(),
            "notes": {
                "q_grid": "protocol q list {0.001,0.01,0.02,0.05,0.1} plus 0.005 from the "
                          "summary tables",
                "population": "deterministic largest-remainder apportionment",
            },
        }
        self.path.mkdir(parents=True, exist_ok=True)
        tmp = self.manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2) + "\n")
        os.replace(tmp, self.manifest_path)

    def load(self) -> list[EstimateRecord]:
        """Read records, dropping a torn final line from an interrupted run."""
        if not self.records_path.exists():
            return []
        out = []
        with open(self.records_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != RECORD_HEADER:
                raise RunAborted(f"{self.records_path} has an unexpected header")
            for row in reader:
                try:
                    out.append(EstimateRecord.from_row(row))
                except (TypeError, ValueError, KeyError):
                    log.warning("skipping malformed record row %r", row)
        return out

    def append(self, records: list[EstimateRecord]) -> None:
        fresh = not self.records_path.exists()
        with open(self.records_path, "a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if fresh:
                writer.writerow(RECORD_HEADER)
            writer.writerows(r.to_row() for r in records)

    def rewrite(self, records: list[EstimateRecord]) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RECORD_HEADER)
        writer.writerows(r.to_row() for r in records)
        tmp = self.records_path.with_suffix(".tmp")
        tmp.write_text(buf.getvalue())
        os.replace(tmp, self.records_path)


def sort_records(records: Iterable[EstimateRecord]) -> list[EstimateRecord]:
    return sorted(records, key=EstimateRecord.sort_key)


def _tasks(config: GridConfig, existing: Iterable[EstimateRecord]) -> Iterator[tuple]:
    done: dict[tuple, set] = {}
    for r in existing:
        done.setdefault((r.N, r.A, r.theta), set()).add((r.q, r.rep, r.estimator))
    full = len(config.qs) * config.reps * len(config.estimators)
    for N, A in config.scaled_regimes():
        for theta in config.thetas:
            have = frozenset(done.get((N, A, theta), ()))
            if len(have) >= full:
                continue
            yield (N, A, theta, config.qs, config.reps, config.master_seed,
                   config.estimators, have)


def run_grid(
    config: GridConfig,
    parallelism: int = 1,
    store: Optional[RecordStore] = None,
    timing: bool = False,
) -> list[EstimateRecord]:
    """Execute the grid and return the canonically sorted record set.

    With a ``store``, records already present are kept and only the missing
    ones are computed; new records are appended as each population finishes.
    """
    existing = store.load() if store is not None else []
    records = list(existing)
    try:
        if store is not None:
            store.write_manifest(config, "running", len(records))
        tasks = list(_tasks(config, existing))
        log.info("%d population tasks to run (%d records present)", len(tasks), len(existing))

        def collect(batch):
            records.extend(batch)
            if store is not None:
                store.append(batch)

        if parallelism <= 1 or len(tasks) <= 1:
            for task in tasks:
                collect(_run_population(*task, timing))
        else:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                futures = [pool.submit(_run_population, *task, timing) for task in tasks]
                for fut in as_completed(futures):
                    collect(fut.result())
        records = sort_records(records)
        if store is not None:
            store.rewrite(records)
            store.write_manifest(config, "complete", len(records))
    except OSError as exc:
        if store is not None:
            try:
                store.write_manifest(config, "partial", len(records))
            except OSError:
                pass
        raise RunAborted(f"record store I/O failed: {exc}; partial results kept") from exc
    return records


def resume(config: GridConfig, store: RecordStore, parallelism: int = 1,
           timing: bool = False) -> list[EstimateRecord]:
    """Complete a partial store written by the identical config."""
    if store.exists():
        found = store.manifest().get("fingerprint")
        if found != config.fingerprint:
            raise ConfigMismatch(
                f"store {store.path} was written by a different config "
                f"(fingerprint {found[:12] if found else None} != {config.fingerprint[:12]})"
            )
    return run_grid(config, parallelism=parallelism, store=store, timing=timing)


def records_to_dicts(records: Iterable[EstimateRecord]) -> list[dict]:
    return [asdict(r) for r in records]
