"""Sampling without replacement from a materialised population.

Samples are drawn class by class with exact conditional hypergeometric draws
(numpy's ``marginals`` method), so nothing of size ``N`` is ever allocated.
"""
from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from dve.errors import EmptySample, InvalidSpec
from dve.profile import FrequencyProfile, Population, profile_from_counts

GENERATOR = f"numpy.random.PCG64 (numpy {np.__version__})"

# numpy's multivariate sampler requires sum(colors) < 1e9
_MV_LIMIT = 10**9


def sample_size(N: int, q: float) -> int:
    """``round(q * N)`` with ties rounded up."""
    return int((Decimal(repr(float(q))) * N).to_integral_value(rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class SampleSpec:
    q: float
    seed: int

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise InvalidSpec(f"sampling fraction must lie in (0, 1], got {self.q}")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")

    def n_for(self, N: int) -> int:
        n = sample_size(N, self.q)
        if n < 1:
            raise EmptySample(f"round(q*N) = 0 for q={self.q}, N={N}")
        return n


def _draw_counts(rng: np.random.Generator, sizes: np.ndarray, n: int) -> np.ndarray:
    total = int(sizes.sum())
    if n == 0:
        return np.zeros(sizes.size, dtype=np.int64)
    if n == total:
        return sizes.astype(np.int64, copy=True)
    if sizes.size == 1:
        return np.array([n], dtype=np.int64)
    if total < _MV_LIMIT:
        return rng.multivariate_hypergeometric(sizes, n, method="marginals")
    # split in two; the left half's share is itself hypergeometric
    mid = sizes.size // 2
    left = int(sizes[:mid].sum())
    k = int(rng.hypergeometric(left, total - left, n))
    return np.concatenate(
        [_draw_counts(rng, sizes[:mid], k), _draw_counts(rng, sizes[mid:], n - k)]
    )


def draw_class_counts(pop: Population, spec: SampleSpec) -> np.ndarray:
    """Per-class sample counts ``n_j``, aligned with ``pop.class_sizes``."""
    n = spec.n_for(pop.N)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    return _draw_counts(rng, pop.class_sizes, n)


def draw_sample(pop: Population, spec: SampleSpec) -> FrequencyProfile:
    """Draw ``round(q*N)`` rows without replacement and profile them."""
    return profile_from_counts(draw_class_counts(pop, spec))


def derive_cell_seed(master_seed: int, cell: tuple) -> int:
    """64-bit seed for one ``(N, A, theta, q, rep)`` cell.

    BLAKE2b over a fixed little-endian encoding, so the seed depends only on
    the coordinates and never on execution order or platform.
    """
    N, A, theta, q, rep = cell
    payload = struct.pack(
        "<QQQddQ",
        master_seed % 2**64,
        int(N),
        int(A),
        float(theta),
        float(q),
        int(rep),
    )
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def random_master_seed() -> int:
    return secrets.randbits(63)

