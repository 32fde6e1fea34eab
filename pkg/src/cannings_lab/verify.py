"""Statistical comparisons between the discrete model and its limit.

Every check returns a report object that serializes to JSON and renders as
an aligned text table. Replicates are drawn from counter-based streams, so a
check gives the same numbers whatever ``mapper`` fans them out.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .coalescent import simulate_trace
from .errors import TooFewSamples
from .limit import PairRateClock, continuous_block_count, first_jump_time, sample_limit_subtree
from .offspring import (OffspringLaw, WrightFisher, distinct_uniform, exact_moments)
from .profile import DiscreteProfile, ProfilePair, discretize
from .rng import run_replicates, stream
from .thresholds import DEFAULT, Thresholds
from .tree import (CanningsTree, build_tree, contour_function, height_function,
                   lineage_counts, sample_k_point_subtree)


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    def cell(x):
        if isinstance(x, float):
            return f"{x:.6g}"
        return str(x)

    body = [[cell(x) for x in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"


@dataclass
class ComparisonReport:
    name: str
    passed: bool
    rows: list[dict]
    params: dict = field(default_factory=dict)
    seed: int = 0
    runtime: float = 0.0

    def to_dict(self, include_runtime: bool = False) -> dict:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime")
        return d

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        if not self.rows:
            return f"{self.name}: {'PASS' if self.passed else 'FAIL'}\n"
        header = list(self.rows[0])
        table = format_table(header, [[r[h] for h in header] for r in self.rows])
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}\n{table}"


@dataclass
class QuantileCurve:
    probe: str
    quantile: float
    points: list[dict]
    passed: bool = True
    seed: int = 0
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        header = ["n", "estimate", "ci_low", "ci_high", "median"]
        rows = [[p[h] for h in header] for p in self.points]
        return f"{self.probe} q={self.quantile}: {'PASS' if self.passed else 'FAIL'}\n" + \
            format_table(header, rows)


def ks_two_sample(a, b) -> tuple[float, float]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 10 or len(b) < 10:
        raise TooFewSamples("need at least 10 samples on each side")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def sup_cdf_gap(samples, cdf: Callable, cdf_left: Callable | None = None) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``cdf``.

    Both right values and left limits are compared at every sample point, so
    atoms in either distribution are handled.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    left = cdf if cdf_left is None else cdf_left
    uniq, first = np.unique(x, return_index=True)
    last = np.append(first[1:], n)
    ecdf_right = last / n
    ecdf_left = first / n
    fr = np.asarray(cdf(uniq), dtype=float)
    fl = np.asarray(left(uniq), dtype=float)
    return float(max(np.max(np.abs(ecdf_right - fr)), np.max(np.abs(ecdf_left - fl))))


def mixed_marginal(a, b) -> dict:
    """Compare two samples with a possible atom at 0.

    The statistic is the sup CDF gap over the full samples. The p-value
    combines a two-proportion z-test on the atom with a KS test on the
    positive parts (Bonferroni over the two).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    stat, _ = ks_two_sample(a, b)
    za, zb = a == 0, b == 0
    pa, pb = za.mean(), zb.mean()
    pooled = (za.sum() + zb.sum()) / (len(a) + len(b))
    se = math.sqrt(pooled * (1 - pooled) * (1 / len(a) + 1 / len(b)))
    p_atom = 1.0 if se == 0 else float(2 * stats.norm.sf(abs(pa - pb) / se))
    pos_a, pos_b = a[~za], b[~zb]
    if len(pos_a) >= 10 and len(pos_b) >= 10:
        p_pos = ks_two_sample(pos_a, pos_b)[1]
    else:
        p_pos = 1.0
    has_atom = bool(pa > 0 or pb > 0)
    p = min(1.0, 2 * min(p_atom, p_pos)) if has_atom else p_pos
    return {"statistic": stat, "p_value": p, "atom_a": float(pa), "atom_b": float(pb)}


def _fdd_features(tree) -> tuple[np.ndarray, np.ndarray]:
    return np.sort(tree.leaf_heights), np.sort(tree.branch_heights())


def _discrete_fdd_rep(profile, law, k, rng):
    return _fdd_features(sample_k_point_subtree(build_tree(profile, law, rng), k, rng))


def _limit_fdd_rep(pair, clock, k, rng):
    return _fdd_features(sample_limit_subtree(pair, k, rng, clock=clock))


def compare_fdd(pair: ProfilePair, law: OffspringLaw, n: int, k: int, reps: int, seed: int,
                mapper: Callable = map, rate_distortion: float = 1.0,
                thresholds: Thresholds = DEFAULT) -> ComparisonReport:
    """Marginal comparison of sorted leaf and branch heights of k-point trees
    from discrete trees at scale ``n`` against the limit sampler.

    ``rate_distortion`` multiplies the limit merge rate, for sensitivity runs.
    """
    t0 = time.perf_counter()
    profile = discretize(pair.ell, n)
    limit_pair = pair if rate_distortion == 1.0 else pair.scaled_rate(rate_distortion)
    clock = PairRateClock.from_pair(limit_pair)
    disc = run_replicates(partial(_discrete_fdd_rep, profile, law, k), seed, "fdd-discrete",
                          reps, mapper)
    lim = run_replicates(partial(_limit_fdd_rep, limit_pair, clock, k), seed, "fdd-limit",
                         reps, mapper)
    rows = []
    for j in range(k):
        a = [d[0][j] for d in disc]
        b = [d[0][j] for d in lim]
        stat, p = ks_two_sample(a, b)
        rows.append({"marginal": f"leaf_{j + 1}", "statistic": stat, "p_value": p})
    for j in range(k - 1):
        res = mixed_marginal([d[1][j] for d in disc], [d[1][j] for d in lim])
        rows.append({"marginal": f"branch_{j + 1}", "statistic": res["statistic"],
                     "p_value": res["p_value"]})
    for r in rows:
        r["p_adjusted"] = min(1.0, r["p_value"] * len(rows))
    passed = all(r["statistic"] < thresholds.ks_max for r in rows)
    return ComparisonReport("compare_fdd", passed, rows,
                            {"n": n, "k": k, "reps": reps, "law": law.to_dict(),
                             "rate_distortion": rate_distortion},
                            seed, time.perf_counter() - t0)


def _tree_lineages_rep(profile, law, h_star, k, rng):
    tree = build_tree(profile, law, rng)
    idx = rng.choice(profile.q(h_star), size=k, replace=False)
    return lineage_counts(tree, h_star, idx)


def _trace_rep(profile, law, h_star, k, rng):
    return simulate_trace(profile, law, h_star, k, rng, method="offspring").counts


def check_transition_law(law: OffspringLaw, q_const: int, h_star: int, k: int, reps: int,
                         seed: int, mapper: Callable = map,
                         thresholds: Thresholds = DEFAULT) -> ComparisonReport:
    """Chi-square comparison, level by level, of lineage counts read off full
    trees and those produced by the lineage-only sampler."""
    t0 = time.perf_counter()
    profile = DiscreteProfile.constant(q_const, h_star)
    a = np.array(run_replicates(partial(_tree_lineages_rep, profile, law, h_star, k),
                                seed, "transition-tree", reps, mapper))
    b = np.array(run_replicates(partial(_trace_rep, profile, law, h_star, k),
                                seed, "transition-trace", reps, mapper))
    rows = []
    for i in range(1, h_star + 1):
        cats = np.union1d(a[:, i], b[:, i])
        table = np.array([[np.sum(a[:, i] == c) for c in cats], [np.sum(b[:, i] == c) for c in cats]])
        if len(cats) < 2:
            stat, p = 0.0, 1.0
        else:
            res = stats.chi2_contingency(table, correction=False)
            stat, p = float(res.statistic), float(res.pvalue)
        rows.append({"level": h_star - i, "chi2": stat, "p_value": p,
                     "mean_tree": float(a[:, i].mean()), "mean_trace": float(b[:, i].mean())})
    passed = all(r["p_value"] > thresholds.chi2_p_min for r in rows)
    return ComparisonReport("transition_check", passed, rows,
                            {"q": q_const, "h_star": h_star, "k": k, "reps": reps,
                             "law": law.to_dict()}, seed, time.perf_counter() - t0)


def estimate_distinct3(law: OffspringLaw, q_s: int, q_s1: int, reps: int,
                       rng: np.random.Generator, chunk: int = 1024) -> tuple[float, float]:
    """Monte Carlo ``P(3 uniform distinct children have distinct parents)``."""
    hits = 0
    done = 0
    while done < reps:
        size = min(chunk, reps - done)
        ends = np.cumsum(law.sample_batch(q_s, q_s1, size, rng), axis=1)
        kids = distinct_uniform(size, q_s1, 3, rng)
        parents = np.sort((ends[:, None, :] <= kids[:, :, None]).sum(axis=2), axis=1)
        hits += int(np.sum(np.all(np.diff(parents, axis=1) != 0, axis=1)))
        done += size
    p = hits / reps
    return p, math.sqrt(max(p * (1 - p), 1.0 / reps) / reps)


def check_moment_asymptotics(law: OffspringLaw, pair: ProfilePair, n_grid: Sequence[int],
                             reps: int, seed: int, thresholds: Thresholds = DEFAULT,
                             constant_profile: bool = False) -> ComparisonReport:
    """Tabulate offspring moments at the middle generation across ``n_grid``.

    The check passes when ``q (1 - P(3 distinct)) / 3`` is within
    ``se_mult`` standard errors of the offspring variance and the
    fourth-moment inequality residual is non-negative at every ``n``.
    """
    t0 = time.perf_counter()
    rows = []
    for idx, n in enumerate(n_grid):
        if constant_profile:
            q_s = q_s1 = n
        else:
            prof = discretize(pair.ell, n)
            s = max(1, prof.h_q // 2 - 1)
            q_s, q_s1 = prof.q(s), prof.q(s + 1)
        mom = exact_moments(law, q_s, q_s1)
        p3, se = estimate_distinct3(law, q_s, q_s1, reps, stream(seed, "moments", idx))
        est = q_s * (1 - p3) / 3
        est_se = q_s * se / 3
        residual = mom.residual_22(q_s, q_s1)
        rows.append({
            "n": n, "q_s": q_s, "n_collision": n * mom.falling2 / q_s1 * q_s / (q_s1 - 1)
            if q_s1 > 1 else 0.0,
            "sigma2": mom.sigma2, "triple_est": est, "triple_se": est_se,
            "z": (est - mom.sigma2) / est_se, "third_over_n": mom.third / n,
            "residual_22": residual,
        })
    passed = all(abs(r["z"]) <= thresholds.se_mult and r["residual_22"] >= 0 for r in rows)
    return ComparisonReport("moments", passed, rows,
                            {"n_grid": list(n_grid), "reps": reps, "law": law.to_dict()},
                            seed, time.perf_counter() - t0)


def _cdfi_rep(profile, law, h_star, k, probe, rng):
    return int(simulate_trace(profile, law, h_star, k, rng, stop=probe).counts[-1])


def lineage_quantiles(probe: str, n_grid: Sequence[int], law: OffspringLaw, reps: int,
                      seed: int, quantile: float = 0.95, pair: ProfilePair | None = None,
                      mapper: Callable = map, thresholds: Thresholds = DEFAULT) -> QuantileCurve:
    """Quantiles of ancestral lineage counts with bootstrap intervals.

    ``probe="cdfi"`` starts from a whole generation at ``h* = n/2`` and reads
    the count ``n/4`` generations below. ``probe="x1"`` starts from the whole
    top generation of a constant population ``q = n`` and reads generation 1.
    """
    pair = ProfilePair.constant() if pair is None else pair
    points = []
    for idx, n in enumerate(n_grid):
        if probe == "cdfi":
            profile = discretize(pair.ell, n)
            h_star = n // 2
            stop = h_star - n // 4
        elif probe == "x1":
            profile = DiscreteProfile.constant(n, n)
            h_star, stop = n, 1
        else:
            raise ValueError(f"unknown probe {probe!r}")
        k = profile.q(h_star)
        vals = np.array(run_replicates(partial(_cdfi_rep, profile, law, h_star, k, stop),
                                       seed, f"{probe}-{n}", reps, mapper))
        est = float(np.quantile(vals, quantile, method="inverted_cdf"))
        boot_rng = stream(seed, "bootstrap", idx)
        draws = boot_rng.choice(vals, size=(thresholds.bootstrap, len(vals)), replace=True)
        boot = np.quantile(draws, quantile, axis=1, method="inverted_cdf")
        lo, hi = np.quantile(boot, [0.025, 0.975])
        points.append({"n": n, "estimate": est, "ci_low": float(min(lo, est)),
                       "ci_high": float(max(hi, est)), "median": float(np.median(vals)),
                       "reps": reps})
    return QuantileCurve(probe, quantile, points, True, seed,
                         {"law": law.to_dict(), "n_grid": list(n_grid)})


def contour_height_discrepancy(tree: CanningsTree) -> float:
    """``sup_i |C(2i) - H(i)| / n`` with ``2i`` clamped to the contour length."""
    hgt = height_function(tree)
    c = contour_function(tree)
    idx = np.minimum(2 * np.arange(len(hgt)), len(c) - 1)
    return float(np.max(np.abs(c[idx] - hgt))) / tree.n


def _discrepancy_rep(profile, law, rng):
    return contour_height_discrepancy(build_tree(profile, law, rng))


def discrepancy_curve(law: OffspringLaw, pair: ProfilePair, n_grid: Sequence[int], reps: int,
                      seed: int, mapper: Callable = map) -> ComparisonReport:
    """Median contour/height discrepancy per ``n``; passes when it decreases."""
    rows = []
    for n in n_grid:
        vals = run_replicates(partial(_discrepancy_rep, discretize(pair.ell, n), law),
                              seed, f"discrepancy-{n}", reps, mapper)
        rows.append({"n": n, "median": float(np.median(vals)), "max": float(np.max(vals))})
    med = [r["median"] for r in rows]
    passed = all(b < a for a, b in zip(med, med[1:]))
    return ComparisonReport("discrepancy", passed, rows,
                            {"n_grid": list(n_grid), "reps": reps, "law": law.to_dict()}, seed)


def _first_merge_rep(profile, law, h_star, k, rng):
    counts = simulate_trace(profile, law, h_star, k, rng).counts
    return int(np.argmax(counts < k))


def _continuous_rep(clock, horizon, k, rng):
    return first_jump_time(continuous_block_count(clock, horizon, k, rng), horizon)


def appendix_a_check(law: OffspringLaw, n: int, k: int, reps: int, seed: int,
                     pair: ProfilePair | None = None, mapper: Callable = map,
                     rate_distortion: float = 1.0,
                     thresholds: Thresholds = DEFAULT) -> ComparisonReport:
    """First-merge time of ``k`` lineages started at ``h* = n/2``: discrete
    trace against the continuous block counter, plus the closed form when the
    pair is constant."""
    t0 = time.perf_counter()
    pair = ProfilePair.constant() if pair is None else pair
    profile = discretize(pair.ell, n)
    h_star = n // 2
    horizon = h_star / n
    lim_pair = pair if rate_distortion == 1.0 else pair.scaled_rate(rate_distortion)
    clock = PairRateClock.from_pair(lim_pair)
    steps = run_replicates(partial(_first_merge_rep, profile, law, h_star, k), seed,
                           "appendix-discrete", reps, mapper)
    disc = np.array(steps) / n
    cont = np.array(run_replicates(partial(_continuous_rep, clock, horizon, k), seed,
                                   "appendix-continuous", reps, mapper))
    stat, p = ks_two_sample(disc, cont)
    rows = [{"comparison": "discrete_vs_continuous", "statistic": stat, "p_value": p,
             "mean_a": float(disc.mean()), "mean_b": float(cont.mean())}]
    ell0, sig0 = pair.ell.vs, pair.sigma.vs
    if np.all(ell0 == ell0[0]) and np.all(sig0 == sig0[0]):
        rate = rate_distortion * k * (k - 1) / 2 * sig0[0] ** 2 / ell0[0]

        def cdf(t):
            t = np.asarray(t, dtype=float)
            return np.where(t >= horizon, 1.0, -np.expm1(-rate * np.maximum(t, 0)))

        def cdf_left(t):
            t = np.asarray(t, dtype=float)
            return np.where(t > horizon, 1.0, -np.expm1(-rate * np.minimum(np.maximum(t, 0), horizon)))

        exact_mean = -math.expm1(-rate * horizon) / rate
        for label, sample in (("discrete_vs_exact", disc), ("continuous_vs_exact", cont)):
            rows.append({"comparison": label, "statistic": sup_cdf_gap(sample, cdf, cdf_left),
                         "p_value": float("nan"), "mean_a": float(sample.mean()),
                         "mean_b": exact_mean})
    passed = all(r["statistic"] < thresholds.ks_max for r in rows)
    return ComparisonReport("appendix_a", passed, rows,
                            {"n": n, "k": k, "reps": reps, "law": law.to_dict(),
                             "h_star": h_star, "rate_distortion": rate_distortion},
                            seed, time.perf_counter() - t0)
