"""Sample frequency profiles and population data model.

A sample is summarised by its frequency-of-frequencies: ``f[i]`` is the number
of classes that occur exactly ``i`` times in the sample.  Every estimator in
:mod:`dve.estimators` is a function of this map plus the population size and
the sampling fraction.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from dve.errors import EmptySample, InvalidSpec


@dataclass(frozen=True)
class ZipfSpec:
    """Zipfian population parameters: size ``N``, alphabet ``A``, skew ``theta``."""

    N: int
    A: int
    theta: float

    def __post_init__(self):
        if self.A < 1:
            raise InvalidSpec(f"alphabet size must be >= 1, got {self.A}")
        if self.N < self.A:
            raise InvalidSpec(f"N must be ≥ A (N={self.N}, A={self.A})")
        if not self.theta >= 0:
            raise InvalidSpec(f"theta must be >= 0, got {self.theta}")

    @property
    def uniform_class_size(self) -> float:
        """``N / A``: the class size every value would have at ``theta = 0``."""
        return self.N / self.A


@dataclass(frozen=True)
class FrequencyProfile:
    """Sparse frequency-of-frequencies map of a sample.

    ``n`` (sample size) and ``d`` (distinct classes in the sample) are computed
    once at construction.  ``freqs``/``counts`` hold the same data as parallel
    int64 arrays sorted by frequency, for vectorised power sums.
    """

    freq_counts: Mapping[int, int]
    n: int = field(init=False)
    d: int = field(init=False)
    freqs: np.ndarray = field(init=False, repr=False, compare=False)
    counts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        items = sorted((int(i), int(f)) for i, f in self.freq_counts.items() if f != 0)
        for i, f in items:
            if i < 1 or f < 0:
                raise InvalidSpec(f"invalid frequency entry {i}: {f}")
        if not items:
            raise EmptySample("sample profile is empty")
        freqs = np.array([i for i, _ in items], dtype=np.int64)
        counts = np.array([f for _, f in items], dtype=np.int64)
        freqs.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "freq_counts", MappingProxyType(dict(items)))
        object.__setattr__(self, "n", sum(i * f for i, f in items))
        object.__setattr__(self, "d", sum(f for _, f in items))
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "counts", counts)

    def __hash__(self):
        return hash(tuple(self.freq_counts.items()))

    def __eq__(self, other):
        if not isinstance(other, FrequencyProfile):
            return NotImplemented
        return dict(self.freq_counts) == dict(other.freq_counts)

    def f(self, i: int) -> int:
        """Number of classes seen exactly ``i`` times."""
        return self.freq_counts.get(i, 0)

    @property
    def max_frequency(self) -> int:
        return int(self.freqs[-1])

    def truncated(self, c: int) -> tuple[Optional["FrequencyProfile"], int]:
        """Drop classes seen more than ``c`` times.

        Returns the reduced profile (``None`` if nothing is left) and the number
        of classes removed.
        """
        kept = {i: f for i, f in self.freq_counts.items() if i <= c}
        removed = self.d - sum(kept.values())
        return (FrequencyProfile(kept) if kept else None), removed

    def to_dict(self) -> dict:
        return {
            "freq_counts": {str(i): f for i, f in self.freq_counts.items()},
            "n": self.n,
            "d": self.d,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FrequencyProfile":
        profile = cls({int(i): int(f) for i, f in data["freq_counts"].items()})
        for key in ("n", "d"):
            if key in data and int(data[key]) != getattr(profile, key):
                raise InvalidSpec(f"stored {key}={data[key]} disagrees with freq_counts")
        return profile

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frequency", "count"])
            writer.writerows(self.freq_counts.items())

    @classmethod
    def read(cls, path) -> "FrequencyProfile":
        """Load a profile from ``.json`` or two-column ``frequency,count`` CSV."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
            return cls.from_dict(json.loads(text))
        rows = list(csv.reader(text.splitlines()))
        if rows and not rows[0][0].strip().isdigit():
            rows = rows[1:]
        return cls({int(r[0]): int(r[1]) for r in rows if r})


def profile_from_counts(sample_class_counts: Iterable[int]) -> FrequencyProfile:
    """Tally per-class sample counts ``n_j`` into a frequency profile.

    Zero counts (classes absent from the sample) are ignored.

    >>> dict(profile_from_counts([2, 1, 1, 0]).freq_counts)
    {1: 2, 2: 1}
    """
    counts = np.asarray(sample_class_counts, dtype=np.int64)
    if counts.size and counts.min() < 0:
        raise InvalidSpec("class counts must be non-negative")
    counts = counts[counts > 0]
    if counts.size == 0:
        raise EmptySample("no class has a positive count")
    freqs, tallies = np.unique(counts, return_counts=True)
    return FrequencyProfile(dict(zip(freqs.tolist(), tallies.tolist())))


def profile_from_values(value_stream: Iterable[Hashable]) -> FrequencyProfile:
    per_value = Counter(value_stream)
    if not per_value:
        raise EmptySample("value stream is empty")
    return FrequencyProfile(Counter(per_value.values()))


@dataclass(frozen=True)
class Population:
    """Materialised population: class sizes ``N_j`` sorted non-increasing."""

    class_sizes: np.ndarray
    meta: Optional[ZipfSpec] = None
    N: int = field(init=False)

    def __post_init__(self):
        sizes = np.asarray(self.class_sizes, dtype=np.int64)
        if sizes.ndim != 1 or sizes.size == 0:
            raise InvalidSpec("population needs at least one class")
        if sizes.min() < 1:
            raise InvalidSpec("every class size must be >= 1")
        if np.any(np.diff(sizes) > 0):
            sizes = np.sort(sizes)[::-1].copy()
        sizes.setflags(write=False)
        object.__setattr__(self, "class_sizes", sizes)
        object.__setattr__(self, "N", int(sizes.sum()))

    @property
    def D(self) -> int:
        return int(self.class_sizes.size)

    @property
    def mean_class_size(self) -> float:
        return self.N / self.D

    @property
    def gamma_sq(self) -> float:
        return population_gamma_sq(self)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "Population":
        return cls(np.asarray(sizes, dtype=np.int64))


def population_gamma_sq(pop: Population) -> float:
    """Squared coefficient of variation of the class sizes.

    Two passes: the mean first, then the mean squared deviation.
    """
    sizes = pop.class_sizes.astype(np.float64)
    mean = sizes.sum() / sizes.size
    dev = sizes - mean
    return float(np.dot(dev, dev) / sizes.size / (mean * mean))
