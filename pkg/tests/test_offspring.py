import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cannings_lab.errors import InfeasibleEvent, LawProfileMismatch
from cannings_lab.offspring import (Counterexample, DirichletMultinomial, WrightFisher,
                                    coal_event_prob, estimate_coal_event_prob, estimate_moments,
                                    exact_moments, h_predicates, law_from_json, law_to_json,
                                    prob_distinct_parents, sample_offspring)

import oracles

WF = WrightFisher()
CE = Counterexample(0.5)


def test_wf_examples():
    rng = np.random.default_rng(0)
    assert sample_offspring(WF, 1, 5, rng).tolist() == [5]
    assert sample_offspring(WF, 4, 0, rng).tolist() == [0, 0, 0, 0]
    m = exact_moments(WF, 2, 2)
    assert (m.mean, m.falling2, m.sigma2, m.third) == (1.0, 0.5, 0.5, 2.5)


@pytest.mark.parametrize("n", [2, 3, 10, 50])
def test_wf_closed_forms(n):
    m = exact_moments(WF, n, n)
    assert m.falling2 == pytest.approx((n - 1) / n, rel=1e-14)
    assert m.sigma2 == pytest.approx(1 - 1 / n, rel=1e-14)


def test_counterexample_parameters():
    r, p = CE.params(55)
    assert r == 27
    assert p == pytest.approx(0.07286060336786311, rel=1e-12)


def test_counterexample_moment_formulas():
    for n in (55, 1024):
        r, p = CE.params(n)
        m = exact_moments(CE, n, n)
        assert m.falling2 == pytest.approx(p * r * (r - 1) / n, rel=1e-12)
        assert m.third == pytest.approx(p * r**3 / n + (1 - p * r / n), rel=1e-12)
        assert m.mean == 1.0


@pytest.mark.parametrize("law, q, q1, exact", [
    (WF, 2, 2, oracles.wf_vectors(2, 2)),
    (WF, 3, 4, oracles.wf_vectors(3, 4)),
    (DirichletMultinomial(1.5), 3, 4, oracles.dm_vectors(3, 4, Fraction(3, 2))),
    (DirichletMultinomial(0.25), 2, 5, oracles.dm_vectors(2, 5, Fraction(1, 4))),
])
def test_moments_match_enumeration(law, q, q1, exact):
    mean, f2, var, third, cross = (float(x) for x in oracles.moments(exact))
    m = exact_moments(law, q, q1)
    assert m.mean == pytest.approx(mean, rel=1e-12)
    assert m.falling2 == pytest.approx(f2, rel=1e-12)
    assert m.sigma2 == pytest.approx(var, rel=1e-12)
    assert m.third == pytest.approx(third, rel=1e-12)
    assert m.cross22 == pytest.approx(cross, rel=1e-12)


@pytest.mark.parametrize("n", [7, 8])
def test_counterexample_moments_match_enumeration(n):
    r, p = CE.params(n)
    exact = oracles.counterexample_vectors(n, r, p)
    mean, f2, var, third, cross = oracles.moments(exact)
    m = exact_moments(CE, n, n)
    for a, b in zip((m.mean, m.falling2, m.sigma2, m.third, m.cross22),
                    (mean, f2, var, third, cross)):
        assert a == pytest.approx(b, rel=1e-10)


def test_coal_event_examples():
    assert coal_event_prob(WF, 4, 4, [2]) == 0.25
    assert coal_event_prob(WF, 4, 4, [1]) == 1.0
    assert coal_event_prob(WF, 3, 3, [2, 1]) == pytest.approx(2 / 9, rel=1e-14)
    assert float(oracles.event_prob(oracles.wf_vectors(3, 3), [2, 1])) == pytest.approx(2 / 9)
    with pytest.raises(InfeasibleEvent):
        coal_event_prob(WF, 4, 4, [3, 2])


@pytest.mark.parametrize("law, q, q1, exact", [
    (WF, 3, 4, oracles.wf_vectors(3, 4)),
    (DirichletMultinomial(1.5), 3, 4, oracles.dm_vectors(3, 4, Fraction(3, 2))),
    (CE, 7, 7, oracles.counterexample_vectors(7, *CE.params(7))),
])
@pytest.mark.parametrize("groups", [[2], [1, 1], [3], [2, 1], [1, 1, 1], [2, 2]])
def test_coal_event_matches_enumeration(law, q, q1, exact, groups):
    if sum(groups) > q1:
        pytest.skip("event larger than the generation")
    assert coal_event_prob(law, q, q1, groups) == pytest.approx(
        float(oracles.event_prob(exact, groups)), rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("law", [WF, DirichletMultinomial(0.7), CE])
def test_coal_event_monte_carlo(law):
    rng = np.random.default_rng(11)
    n = 64
    for groups in ([2], [1, 1, 1], [2, 1]):
        exact = coal_event_prob(law, n, n, groups)
        est, se = estimate_coal_event_prob(law, n, n, groups, 40_000, rng)
        assert abs(est - exact) <= 4 * se + 1e-4


def test_collision_frequency_wf50():
    rng = np.random.default_rng(3)
    est, se = estimate_coal_event_prob(WF, 50, 50, [2], 100_000, rng)
    assert abs(est - 1 / 50) <= 3 * se


def test_law_profile_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(LawProfileMismatch):
        sample_offspring(CE, 10, 12, rng)
    with pytest.raises(LawProfileMismatch):
        sample_offspring(Counterexample(0.5, n=10), 12, 12, rng)
    with pytest.raises(LawProfileMismatch):
        DirichletMultinomial(0.0)


def test_counterexample_fast_path_shares_vector():
    rng = np.random.default_rng(5)
    vs = [sample_offspring(CE, 1024, 1024, rng) for _ in range(20)]
    trivial = [v for v in vs if np.all(v == 1)]
    assert len(trivial) >= 2
    assert all(v is trivial[0] for v in trivial)
    assert not trivial[0].flags.writeable


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["wf", "dm", "ce"]), st.integers(2, 40), st.integers(0, 60),
       st.integers(0, 2**32 - 1))
def test_offspring_sum_and_support(kind, q, q1, seed):
    rng = np.random.default_rng(seed)
    if kind == "ce":
        law, q1 = CE, q
        if q < 3:
            q = q1 = 3
    else:
        law = WF if kind == "wf" else DirichletMultinomial(0.8)
    nu = sample_offspring(law, q, q1, rng)
    assert len(nu) == q and nu.sum() == q1 and np.all(nu >= 0)


def bowker_symmetry(a, b):
    """Chi-square test that the joint law of (a, b) is symmetric."""
    pairs = {}
    for x, y in zip(a.tolist(), b.tolist()):
        if x != y:
            key = (min(x, y), max(x, y))
            lo, hi = pairs.get(key, (0, 0))
            pairs[key] = (lo + (x < y), hi + (x > y))
    terms = [(u - v) ** 2 / (u + v) for u, v in pairs.values() if u + v > 0]
    return stats.chi2.sf(sum(terms), max(len(terms), 1))


@pytest.mark.parametrize("law, n", [(WF, 20), (DirichletMultinomial(0.5), 20), (CE, 64)])
def test_exchangeability(law, n):
    rng = np.random.default_rng(17)
    batch = law.sample_batch(n, n, 100_000, rng)
    assert bowker_symmetry(batch[:, 0], batch[:, 1]) > 0.001
    assert bowker_symmetry(batch[:, 0], batch[:, n - 1]) > 0.001


def test_estimate_moments_wf50():
    m = estimate_moments(WF, 50, 50, 100_000, np.random.default_rng(2))
    assert abs(m.sigma2 - 0.98) <= 3 * m.sigma2_se
    with pytest.raises(ValueError):
        estimate_moments(WF, 50, 50, 10, np.random.default_rng(2))


def test_dm_large_theta_approaches_wf():
    rng = np.random.default_rng(4)
    dm = estimate_moments(DirichletMultinomial(1e4), 20, 20, 50_000, rng)
    wf = exact_moments(WF, 20, 20)
    assert abs(dm.sigma2 - wf.sigma2) <= 3 * dm.sigma2_se
    assert abs(dm.falling2 - wf.falling2) <= 3 * dm.falling2_se


@pytest.mark.parametrize("law", [WF, DirichletMultinomial(0.3), DirichletMultinomial(50.0), CE])
@pytest.mark.parametrize("n", [4, 16, 128, 2048])
def test_fourth_moment_inequality(law, n):
    m = exact_moments(law, n, n)
    assert m.residual_22(n, n) >= 0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30), st.integers(1, 60), st.floats(0.05, 20.0))
def test_fourth_moment_inequality_unequal_generations(q, q1, theta):
    for law in (WF, DirichletMultinomial(theta)):
        assert exact_moments(law, q, q1).residual_22(q, q1) >= -1e-9


def test_distinct_parents_expansion():
    # P(m parents distinct) = 1 - C(m,2) sigma^2 / q (1 + o(1)) at large q
    for law in (WF, DirichletMultinomial(2.0)):
        q = 4096
        s2 = exact_moments(law, q, q).sigma2
        p3 = prob_distinct_parents(law, q, q, 3)
        assert q * (1 - p3) / 3 == pytest.approx(s2, rel=0.01)


def test_h_predicate_trends():
    grid = [2**10, 2**12, 2**14, 2**16]
    ce_report = h_predicates(CE, grid)
    wf_report = h_predicates(WF, grid)
    ce, wf = ce_report["loglog_slope"], wf_report["loglog_slope"]
    assert ce["third_over_n"] < 0
    assert ce["merge_proxy"] < -0.05
    assert abs(wf["merge_proxy"]) < 0.1
    # the large-family tail carries mass ~1 at every n, so it is not uniformly integrable
    assert all(row["tail_64"] > 0.5 for row in ce_report["rows"])
    assert all(row["tail_64"] < 1e-12 for row in wf_report["rows"])


@pytest.mark.parametrize("law", [WF, DirichletMultinomial(2.5), CE])
def test_law_json_round_trip(law):
    text = law_to_json(law)
    assert law_from_json(text) == law
    assert json.loads(text)["law"] in {"wright_fisher", "dirichlet_multinomial", "counterexample"}
