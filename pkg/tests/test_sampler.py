import itertools
import math

import numpy as np
import pytest

from dve.errors import EmptySample, InvalidSpec
from dve.harness import PAPER_QS, PAPER_REPS, PAPER_THETAS, builtin_grid
from dve.profile import Population, ZipfSpec
from dve.sampler import (
    SampleSpec,
    derive_cell_seed,
    draw_class_counts,
    draw_sample,
    sample_size,
)
from dve.zipf import build_population, population_frequency_table


def test_sample_size_rounds_half_up():
    assert sample_size(10, 0.25) == 3
    assert sample_size(1000, 0.001) == 1
    assert sample_size(10**9, 0.005) == 5_000_000
    assert sample_size(3, 0.1) == 0


def test_spec_validation():
    for q in (0.0, -0.1, 1.5):
        with pytest.raises(InvalidSpec):
            SampleSpec(q, 1)
    with pytest.raises(EmptySample):
        draw_sample(Population.from_sizes([1, 1]), SampleSpec(0.1, 1))


def test_full_sample_is_population_table():
    pop = build_population(ZipfSpec(10**4, 500, 1.0))
    p = draw_sample(pop, SampleSpec(1.0, 99))
    assert dict(p.freq_counts) == population_frequency_table(pop)


def test_singletons_half_sample():
    pop = Population.from_sizes([1, 1, 1, 1])
    for seed in range(20):
        p = draw_sample(pop, SampleSpec(0.5, seed))
        assert dict(p.freq_counts) == {1: 2} and p.n == 2


def test_hypergeometric_mean():
    pop = Population.from_sizes([50, 50])
    first = [draw_class_counts(pop, SampleSpec(0.1, s))[0] for s in range(10_000)]
    assert np.mean(first) == pytest.approx(5.0, abs=0.1)


def test_enumerated_composition_probabilities():
    sizes = [2, 2, 1]
    pop = Population.from_sizes(sizes)
    seeds = 20_000
    observed: dict[tuple, int] = {}
    for s in range(seeds):
        key = tuple(draw_class_counts(pop, SampleSpec(0.4, s)).tolist())
        observed[key] = observed.get(key, 0) + 1
    total = math.comb(5, 2)
    for comp in itertools.product(range(3), repeat=3):
        if sum(comp) != 2 or any(c > n for c, n in zip(comp, sizes)):
            continue
        p = math.prod(math.comb(n, c) for n, c in zip(sizes, comp)) / total
        se = math.sqrt(p * (1 - p) / seeds)
        assert abs(observed.get(comp, 0) / seeds - p) <= 3 * se, comp


def test_conservation_on_billion_row_population():
    pop = Population.from_sizes([6 * 10**8, 3 * 10**8, 10**8 - 5, 5])
    counts = draw_class_counts(pop, SampleSpec(0.001, 3))
    assert counts.sum() == 10**6
    assert np.all(counts <= pop.class_sizes)
    p = draw_sample(pop, SampleSpec(0.001, 3))
    assert p.n == 10**6 and p.d <= min(pop.D, p.n)


def test_same_seed_same_sample():
    pop = build_population(ZipfSpec(10**5, 10**3, 1.0))
    a = draw_sample(pop, SampleSpec(0.01, 123))
    b = draw_sample(pop, SampleSpec(0.01, 123))
    assert a == b


def test_cell_seed_deterministic():
    cell = (10**6, 10**4, 1.0, 0.01, 3)
    assert derive_cell_seed(42, cell) == derive_cell_seed(42, cell)
    assert 0 <= derive_cell_seed(42, cell) < 2**64


def _all_cells(preset):
    cfg = builtin_grid(preset)
    return [
        (N, A, t, q, r)
        for N, A in cfg.scaled_regimes()
        for t in PAPER_THETAS
        for q in PAPER_QS
        for r in range(PAPER_REPS)
    ]


def test_cell_seeds_never_collide_over_grid():
    cells = _all_cells("paper-mini") + _all_cells("paper-full")
    seeds = [derive_cell_seed(42, c) for c in cells]
    assert len(set(seeds)) == len(set(cells))


def test_master_seed_changes_every_cell_seed():
    cells = _all_cells("paper-mini")
    a = [derive_cell_seed(1, c) for c in cells]
    b = [derive_cell_seed(2, c) for c in cells]
    assert all(x != y for x, y in zip(a, b))
