"""Deterministic Zipfian populations with exact ground truth.

Expected class sizes ``N * P(i)`` are turned into integers by largest-remainder
apportionment, so a population is a pure function of ``(N, A, theta)`` and all
randomness in an experiment lives in the sampling step.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from dve.errors import InvalidSpec
from dve.profile import Population, ZipfSpec


def zipf_masses(A: int, theta: float) -> np.ndarray:
    """Probability masses ``P(i) = i**-theta / H`` for ranks ``i = 1..A``."""
    if A < 1:
        raise InvalidSpec(f"alphabet size must be >= 1, got {A}")
    if theta == 0:
        return np.full(A, 1.0 / A)
    weights = np.arange(1, A + 1, dtype=np.float64) ** -float(theta)
    # fsum is exactly rounded, which makes the normaliser independent of A's size
    return weights / math.fsum(weights)


def apportion(total: int, masses: np.ndarray) -> np.ndarray:
    """Largest-remainder (Hamilton) apportionment of ``total`` units.

    Ties in the fractional remainder go to the lower rank.
    """
    quotas = masses * float(total)
    base = np.floor(quotas).astype(np.int64)
    frac = quotas - base
    leftover = total - int(base.sum())
    if leftover > 0:
        order = np.argsort(-frac, kind="stable")
        base[order[:leftover]] += 1
    elif leftover < 0:
        # float rounding overshot; take units back from the smallest remainders
        order = np.argsort(frac, kind="stable")
        order = order[base[order] > 0]
        base[order[:-leftover]] -= 1
    return base


def build_population(spec: ZipfSpec) -> Population:
    """Materialise ``Z_{A,theta}`` at population size ``N``.

    Ranks apportioned zero rows are dropped, so ``D <= A`` at high skew.
    """
    if spec.N < spec.A:
        raise InvalidSpec(f"N must be ≥ A (N={spec.N}, A={spec.A})")
    sizes = apportion(spec.N, zipf_masses(spec.A, spec.theta))
    sizes = np.sort(sizes[sizes > 0])[::-1]
    return Population(sizes, meta=spec)


def population_frequency_table(pop: Population) -> dict[int, int]:
    """Population frequency-of-frequencies ``F_i``."""
    sizes, tallies = np.unique(pop.class_sizes, return_counts=True)
    return dict(zip(sizes.tolist(), tallies.tolist()))


def write_population(pop: Population, csv_path, json_path=None) -> dict:
    """Write ``rank,size`` CSV plus a JSON sidecar; returns the sidecar dict."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "size"])
        writer.writerows(enumerate(pop.class_sizes.tolist(), start=1))
    meta = {
        "N": pop.N,
        "A": pop.meta.A if pop.meta else None,
        "theta": pop.meta.theta if pop.meta else None,
        "D": pop.D,
        "gamma_sq": pop.gamma_sq,
    }
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def read_population(csv_path) -> Population:
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    meta = None
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        info = json.loads(sidecar.read_text())
        if info.get("A") is not None:
            meta = ZipfSpec(int(info["N"]), int(info["A"]), float(info["theta"]))
    return Population(np.array([int(r["size"]) for r in rows], dtype=np.int64), meta=meta)
