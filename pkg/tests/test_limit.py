import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from cannings_lab.errors import HeightOutOfRange
from cannings_lab.ktree import KPointTree
from cannings_lab.limit import (PairRateClock, continuous_block_count, first_jump_time,
                                kingman_clock_invert, piecewise_kingman_tree,
                                sample_leaf_heights, sample_limit_subtree)
from cannings_lab.profile import ContinuousProfile, ProfilePair

UNIT_PAIR = ProfilePair.constant()
# ell(x) = x with sigma = 1: the pair rate 1/x blows up at the bottom
RAMP_PAIR = ProfilePair(ContinuousProfile([[0, 0], [1, 1]]), ContinuousProfile.constant(1.0))


def test_clock_examples():
    assert kingman_clock_invert(PairRateClock.constant(1.0), 1.0, 0.3) == pytest.approx(0.7, abs=1e-15)
    assert kingman_clock_invert(PairRateClock.constant(1.0), 0.6, 0.0) == 0.6
    assert kingman_clock_invert(PairRateClock.constant(2.0), 0.5, 2.0) == 0.0
    with pytest.raises(HeightOutOfRange):
        kingman_clock_invert(PairRateClock.constant(1.0), 1.5, 0.1)
    with pytest.raises(HeightOutOfRange):
        kingman_clock_invert(PairRateClock.constant(1.0), 0.0, 0.1)


@st.composite
def pairs(draw):
    k = draw(st.integers(2, 5))
    xs = np.linspace(0, draw(st.floats(0.5, 3.0)), k)
    ell = draw(st.lists(st.floats(0.1, 4.0), min_size=k, max_size=k))
    sig = draw(st.lists(st.floats(0.1, 3.0), min_size=k, max_size=k))
    return ProfilePair(ContinuousProfile(np.column_stack([xs, ell])),
                       ContinuousProfile(np.column_stack([xs, sig])))


@settings(max_examples=30, deadline=None)
@given(pairs())
def test_clock_table_converges_to_true_rate(pair):
    # the table interpolates the rate linearly, so refining 4x cuts the error about 16x
    def rate(x):
        return pair.sigma(x) ** 2 / pair.ell(x)

    total = integrate.quad(rate, 0, pair.h * (1 - 1e-12), points=pair.ell.xs[1:-1], limit=400)[0]
    coarse = abs(PairRateClock.from_pair(pair, refine=16).integral(0, pair.h) - total)
    fine = abs(PairRateClock.from_pair(pair, refine=64).integral(0, pair.h) - total)
    assert fine <= coarse / 8 + 1e-9 * total


@settings(max_examples=60, deadline=None)
@given(pairs(), st.floats(0.01, 1.0), st.floats(0.0, 5.0))
def test_clock_inversion_residual(pair, frac, hazard):
    clock = PairRateClock.from_pair(pair)
    start = frac * clock.top
    b = kingman_clock_invert(clock, start, hazard)
    assert 0 <= b <= start
    if b > 0:
        assert clock.integral(b, start) == pytest.approx(hazard, rel=1e-9, abs=1e-12)
    else:
        assert clock.integral(0, start) <= hazard + 1e-12


def test_two_leaves_merge_probability():
    rng = np.random.default_rng(1)
    clock = PairRateClock.constant(1.0)
    reps = 40_000
    merged = sum(len(piecewise_kingman_tree(clock, [0.9, math.log(2)], rng).merges)
                 for _ in range(reps))
    assert abs(merged / reps - 0.5) <= 4 * math.sqrt(0.25 / reps)


def test_merge_height_uniform_under_diverging_rate():
    # survival below 0.5 is exp(-int_b^0.5 dx/x) = 2b, so the merge height is U(0, 0.5)
    rng = np.random.default_rng(2)
    clock = PairRateClock.from_pair(RAMP_PAIR)
    hs = [piecewise_kingman_tree(clock, [0.8, 0.5], rng).merges[0].height for _ in range(5000)]
    assert stats.kstest(hs, stats.uniform(0, 0.5).cdf).pvalue > 0.001


def test_diverging_rate_merges_everything():
    rng = np.random.default_rng(3)
    for _ in range(500):
        kt = sample_limit_subtree(RAMP_PAIR, 4, rng)
        kt.check()
        assert len(kt.root_order) == 1 and len(kt.merges) == 3


def k2_branch_cdf(x):
    """P(branch height <= x) for two leaves under ell = sigma = 1.

    Given the lower leaf at b, the branch height is b - Exp(1) floored at 0.
    """
    if x < 0:
        return 0.0
    tail = integrate.quad(lambda b: 2 * (1 - b) * (1 - math.exp(-(b - x))), x, 1)[0]
    return 1.0 - tail


def test_k2_branch_law():
    assert k2_branch_cdf(0.0) == pytest.approx(2 / math.e, rel=1e-10)
    rng = np.random.default_rng(4)
    clock = PairRateClock.from_pair(UNIT_PAIR)
    reps = 20_000
    branch = np.array([sample_limit_subtree(UNIT_PAIR, 2, rng, clock).branch_heights()[0]
                       for _ in range(reps)])
    atom = np.mean(branch == 0)
    assert abs(atom - 2 / math.e) <= 4 * math.sqrt(atom * (1 - atom) / reps)
    grid = np.linspace(0.05, 0.95, 10)
    ecdf = np.searchsorted(np.sort(branch), grid, side="right") / reps
    assert np.max(np.abs(ecdf - [k2_branch_cdf(x) for x in grid])) < 0.015


def test_leaf_heights_follow_profile():
    rng = np.random.default_rng(5)
    hs = sample_leaf_heights(RAMP_PAIR, 20_000, rng)
    assert np.all((hs > 0) & (hs < 1))
    assert stats.kstest(hs, lambda x: np.clip(x, 0, 1) ** 2).pvalue > 0.001


def test_limit_subtree_invariants_and_json():
    rng = np.random.default_rng(6)
    pair = ProfilePair(ContinuousProfile([[0, 0.5], [0.4, 2], [1.5, 0]]),
                       ContinuousProfile([[0, 1], [1.5, 2]]))
    clock = PairRateClock.from_pair(pair)
    for k in (1, 2, 5, 9):
        for _ in range(100):
            kt = sample_limit_subtree(pair, k, rng, clock)
            kt.check(strict=True)
            assert len(kt.merges) + len(kt.root_order) == k
            assert KPointTree.from_json(kt.to_json()) == kt
            assert len(kt.distance_vector()) == 2 * k


def test_leaf_out_of_range():
    with pytest.raises(HeightOutOfRange):
        piecewise_kingman_tree(UNIT_PAIR, [0.5, 1.5], np.random.default_rng(0))


def test_block_count_first_jump_is_exponential():
    rng = np.random.default_rng(7)
    clock = PairRateClock.constant(1.0, 6.0)
    jumps = [first_jump_time(continuous_block_count(clock, 5.0, 3, rng), 5.0) for _ in range(5000)]
    assert stats.kstest(jumps, stats.expon(scale=1 / 3).cdf).pvalue > 0.001


def test_block_count_no_jump_probability():
    rng = np.random.default_rng(8)
    reps = 20_000
    still = sum(len(continuous_block_count(UNIT_PAIR, 1.0, 2, rng)) == 1 for _ in range(reps))
    p = math.exp(-1)
    assert abs(still / reps - p) <= 4 * math.sqrt(p * (1 - p) / reps)


def test_block_count_path_shape():
    rng = np.random.default_rng(9)
    path = continuous_block_count(UNIT_PAIR, 0.9, 6, rng)
    times = [t for t, _ in path]
    counts = [c for _, c in path]
    assert counts == list(range(6, 6 - len(path), -1))
    assert times == sorted(times) and times[-1] < 0.9
