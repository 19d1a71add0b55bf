import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from rankcal.domain import RankCalError
from rankcal.randomization import (RandomizationScheme, assign, assign_minimization,
                                   assign_simple, assign_stratified_block, balance_report,
                                   substream)

UNIF4 = (0.25, 0.25, 0.25, 0.25)


def band(p, n, k=3.0):
    return k * math.sqrt(p * (1 - p) / n)


def test_simple_deterministic_and_in_range():
    s = RandomizationScheme("simple", UNIF4, seed=5)
    a, b = assign_simple(500, s), assign_simple(500, s)
    assert_array_equal(a, b)
    assert set(np.unique(a)) <= {1, 2, 3, 4}
    assert not np.array_equal(a, assign_simple(500, s, seed=6))


def test_simple_proportions():
    a = assign_simple(10_000, RandomizationScheme("simple", UNIF4, seed=1))
    props = np.bincount(a, minlength=5)[1:] / a.size
    assert np.all(np.abs(props - 0.25) < 0.02)


def test_simple_unequal_proportions():
    pi = (0.2, 0.3, 0.5)
    a = assign_simple(20_000, RandomizationScheme("simple", pi, seed=2))
    props = np.bincount(a, minlength=4)[1:] / a.size
    for p, got in zip(pi, props):
        assert abs(got - p) < band(p, a.size)


@pytest.mark.parametrize("size, each", [(16, 4), (8, 2), (24, 6)])
def test_stratified_block_exact_counts(size, each):
    s = RandomizationScheme("stratified_block", UNIF4, block_size=8, seed=3)
    a = assign_stratified_block(np.zeros(size, dtype=int), s)
    assert_array_equal(np.bincount(a, minlength=5)[1:], [each] * 4)


def test_block_incompatible():
    with pytest.raises(RankCalError, match="block size 6"):
        RandomizationScheme("stratified_block", UNIF4, block_size=6)
    with pytest.raises(RankCalError):
        RandomizationScheme("stratified_block", UNIF4)
    RandomizationScheme("stratified_block", (0.25, 0.75), block_size=4)


def test_block_prefix_balance_and_truncation():
    s = RandomizationScheme("stratified_block", UNIF4, block_size=8, seed=4)
    strata = np.tile([0, 1, 2], 30)  # 30 per stratum, interleaved arrivals
    a = assign_stratified_block(strata, s)
    for z in range(3):
        seq = a[strata == z]
        for m in range(1, 4):
            assert_array_equal(np.bincount(seq[:8 * m], minlength=5)[1:], [2 * m] * 4)
        # truncated trailing block keeps every count within one block's worth
        counts = np.bincount(seq, minlength=5)[1:]
        assert counts.sum() == 30 and counts.max() - counts.min() <= 2


def test_block_strata_streams_independent_of_other_strata():
    s = RandomizationScheme("stratified_block", UNIF4, block_size=8, seed=9)
    z = np.repeat(["a", "b"], 16)
    base = assign_stratified_block(z, s)
    # interleaving arrivals leaves each stratum's sequence unchanged
    z2 = np.tile(["a", "b"], 16)
    other = assign_stratified_block(z2, s)
    assert_array_equal(base[z == "a"], other[z2 == "a"])
    assert_array_equal(base[z == "b"], other[z2 == "b"])


def test_minimization_first_unit_uniform():
    # the first unit always faces a full tie, so every arm appears over seeds
    firsts = [assign_minimization(["x"], RandomizationScheme("minimization", UNIF4), seed=s)[0]
              for s in range(400)]
    counts = np.bincount(firsts, minlength=5)[1:]
    assert np.all(np.abs(counts / 400 - 0.25) < band(0.25, 400))


def test_minimization_second_unit_balances():
    s = RandomizationScheme("minimization", (0.5, 0.5), p_mz=1.0)
    for seed in range(50):
        a = assign_minimization(["m", "m"], s, seed=seed)
        assert a[0] != a[1]


def test_minimization_multi_factor_and_weights():
    rng = np.random.default_rng(0)
    levels = np.column_stack([rng.integers(0, 2, 300), rng.integers(0, 3, 300)])
    s = RandomizationScheme("minimization", (0.5, 0.5), factor_weights=(2.0, 1.0), seed=8)
    a = assign_minimization(levels, s)
    assert_array_equal(a, assign_minimization(levels, s))
    for f in range(2):
        rep = balance_report(a, levels[:, f], (0.5, 0.5))
        assert rep.max_deviation < 0.1
    with pytest.raises(RankCalError):
        assign_minimization(levels, RandomizationScheme("minimization", (0.5, 0.5),
                                                        factor_weights=(1.0,)))
    with pytest.raises(RankCalError):
        assign_minimization(np.empty((5, 0)), s)


def test_minimization_unequal_pi_long_run():
    pi = (0.25, 0.25, 0.5)
    rng = np.random.default_rng(3)
    z = rng.integers(0, 3, 4000)
    a = assign_minimization(z, RandomizationScheme("minimization", pi, seed=2))
    assert balance_report(a, z, pi).max_deviation < 0.02


def test_minimization_beats_simple_on_same_stream():
    rng = np.random.default_rng(11)
    levels = np.column_stack([rng.integers(0, 4, 10_000), rng.integers(0, 2, 10_000)])
    strata = levels[:, 0] * 2 + levels[:, 1]
    mz = assign_minimization(levels, RandomizationScheme("minimization", UNIF4, seed=1))
    sr = assign_simple(10_000, RandomizationScheme("simple", UNIF4, seed=1))
    for z in (levels[:, 0], levels[:, 1]):
        assert balance_report(mz, z, UNIF4).max_deviation < balance_report(sr, z, UNIF4).max_deviation
    assert balance_report(mz, strata, UNIF4).max_deviation < 0.05


@pytest.mark.parametrize("p_mz", [0.5, 0.3, 1.01])
def test_p_mz_range(p_mz):
    with pytest.raises(RankCalError):
        RandomizationScheme("minimization", UNIF4, p_mz=p_mz)


def test_scheme_validation():
    with pytest.raises(RankCalError):
        RandomizationScheme("urn", UNIF4)
    with pytest.raises(RankCalError):
        RandomizationScheme("simple", (0.5, 0.6))
    with pytest.raises(RankCalError):
        RandomizationScheme("simple", (1.0,))


def test_balance_report_examples():
    rep = balance_report([1, 1, 1, 1], [0, 0, 0, 0], (0.5, 0.5))
    assert rep.max_deviation == 0.5
    s = RandomizationScheme("stratified_block", UNIF4, block_size=8, seed=0)
    z = np.repeat([0, 1, 2], [8, 16, 24])
    a = assign_stratified_block(z, s)
    rep = balance_report(a, z, UNIF4)
    assert rep.max_deviation == 0
    assert_array_equal(rep.stratum_sizes, [8, 16, 24])
    assert_array_equal(rep.counts.sum(axis=1), rep.stratum_sizes)
    with pytest.raises(RankCalError):
        balance_report([1, 2], [0], UNIF4)
    with pytest.raises(RankCalError):
        balance_report([1, 5], [0, 0], UNIF4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["simple", "stratified_block", "minimization"]))
def test_counts_partition(seed, kind):
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 5, 97)
    s = RandomizationScheme(kind, UNIF4, block_size=8 if kind == "stratified_block" else None,
                            seed=seed)
    a = assign(s, strata=z)
    rep = balance_report(a, z, UNIF4)
    assert rep.counts.sum() == 97
    assert_array_equal(rep.counts.sum(axis=1), np.bincount(z)[np.bincount(z) > 0])


@pytest.mark.parametrize("kind, pi, unit", [
    ("simple", (0.25, 0.25, 0.5), 1),
    ("stratified_block", (0.25, 0.25, 0.5), 1),
    ("minimization", (1 / 3, 1 / 3, 1 / 3), 1),
    ("minimization", (1 / 3, 1 / 3, 1 / 3), 4),
])
def test_marginal_probabilities(kind, pi, unit):
    # one arrival position across many independent trials: P(A = j) = pi_j
    s = RandomizationScheme(kind, pi, block_size=4 if kind == "stratified_block" else None)
    z = np.zeros(5, dtype=int)
    got = np.array([assign(s, strata=z, seed=r)[unit] for r in range(3000)])
    for j, p in enumerate(pi, start=1):
        assert abs(np.mean(got == j) - p) < band(p, got.size)


@pytest.mark.parametrize("kind", ["stratified_block", "minimization"])
def test_condition_d_shrinks(kind):
    rng = np.random.default_rng(21)
    dev = []
    for n in (200, 2000):
        z = rng.integers(0, 4, n)
        s = RandomizationScheme(kind, UNIF4, block_size=8 if kind == "stratified_block" else None,
                                seed=n)
        dev.append(balance_report(assign(s, strata=z), z, UNIF4).max_deviation)
    assert dev[1] < dev[0]
    assert dev[1] < 0.02


def test_substream_keys_distinct():
    a = np.random.default_rng(substream(7, 0, 1)).random()
    b = np.random.default_rng(substream(7, 1, 0)).random()
    c = np.random.default_rng(substream(substream(7, 0), 1)).random()
    assert a != b and a == c
