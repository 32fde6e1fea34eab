"""Exchangeable offspring laws and their moments.

An offspring vector for generation ``s`` has ``q_s`` entries summing to
``q_s1``. Each law knows its factorial cross moments
``E[prod_i (nu_i)_{N_i}]`` in closed form, which drives exact moments and
exact coalescence probabilities.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import InfeasibleEvent, LawProfileMismatch


def falling(x: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= x - i
    return out


def rising(x: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= x + i
    return out


class OffspringLaw:
    """Interface implemented by every shipped law."""

    name = "abstract"

    def check(self, q_s: int, q_s1: int) -> None:
        if q_s < 1 or q_s1 < 0:
            raise LawProfileMismatch(f"bad generation sizes ({q_s}, {q_s1})")

    def sample(self, q_s: int, q_s1: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_batch(self, q_s: int, q_s1: int, size: int,
                     rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.sample(q_s, q_s1, rng) for _ in range(size)])

    def factorial_moment(self, q_s: int, q_s1: int, orders: Sequence[int]) -> float:
        raise NotImplementedError

    def marginal_pmf(self, q_s: int, q_s1: int) -> np.ndarray:
        raise NotImplementedError

    def sample_parents(self, q_s: int, q_s1: int, rng: np.random.Generator) -> np.ndarray:
        """Non-decreasing parent index of each child, i.e. the offspring
        vector in run-length form."""
        return np.repeat(np.arange(q_s), sample_offspring(self, q_s, q_s1, rng))

    def place_lineages(self, q_s: int, q_s1: int, m: int,
                       rng: np.random.Generator) -> np.ndarray:
        """Parent indices of ``m`` distinct uniformly chosen children."""
        nu = self.sample(q_s, q_s1, rng)
        counts = rng.multivariate_hypergeometric(nu, m)
        parents = np.repeat(np.arange(q_s), counts)
        return parents[rng.permutation(m)]

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class WrightFisher(OffspringLaw):
    """Every child picks its parent uniformly and independently."""

    name = "wright_fisher"

    def sample(self, q_s, q_s1, rng):
        self.check(q_s, q_s1)
        return np.bincount(rng.integers(q_s, size=q_s1), minlength=q_s)

    def sample_batch(self, q_s, q_s1, size, rng):
        self.check(q_s, q_s1)
        return rng.multinomial(q_s1, np.full(q_s, 1.0 / q_s), size=size)

    def sample_parents(self, q_s, q_s1, rng):
        self.check(q_s, q_s1)
        return np.sort(rng.integers(q_s, size=q_s1))

    def factorial_moment(self, q_s, q_s1, orders):
        total = sum(orders)
        return falling(q_s1, total) / float(q_s) ** total

    def marginal_pmf(self, q_s, q_s1):
        return stats.binom.pmf(np.arange(q_s1 + 1), q_s1, 1.0 / q_s)

    def place_lineages(self, q_s, q_s1, m, rng):
        # distinct children of a Wright-Fisher generation have iid uniform parents
        return rng.integers(q_s, size=m)

    def to_dict(self):
        return {"law": self.name}


@dataclass(frozen=True)
class DirichletMultinomial(OffspringLaw):
    """Multinomial offspring with symmetric Dirichlet(theta) parent weights."""

    theta: float
    name = "dirichlet_multinomial"

    def __post_init__(self):
        if not self.theta > 0:
            raise LawProfileMismatch("theta must be positive")

    def sample(self, q_s, q_s1, rng):
        self.check(q_s, q_s1)
        if q_s == 1:
            return np.array([q_s1])
        return rng.multinomial(q_s1, rng.dirichlet(np.full(q_s, self.theta)))

    def factorial_moment(self, q_s, q_s1, orders):
        total = sum(orders)
        num = falling(q_s1, total)
        for a in orders:
            num *= rising(self.theta, a)
        return num / rising(q_s * self.theta, total)

    def marginal_pmf(self, q_s, q_s1):
        k = np.arange(q_s1 + 1)
        if q_s == 1:
            return (k == q_s1).astype(float)
        return stats.betabinom.pmf(k, q_s1, self.theta, (q_s - 1) * self.theta)

    def place_lineages(self, q_s, q_s1, m, rng):
        # a uniform m-subset of a DM(q_s1; theta) family is DM(m; theta): Polya urn
        parents = np.empty(m, dtype=np.int64)
        counts: dict[int, int] = {}
        for i in range(m):
            u = rng.random() * (i + q_s * self.theta)
            chosen = -1
            for p, c in counts.items():
                u -= c
                if u < 0:
                    chosen = p
                    break
            if chosen < 0:
                chosen = int(rng.integers(q_s))
            counts[chosen] = counts.get(chosen, 0) + 1
            parents[i] = chosen
        return parents

    def to_dict(self):
        return {"law": self.name, "theta": self.theta}


@lru_cache(maxsize=32)
def _all_ones(n: int) -> np.ndarray:
    # shared read-only vector for the (very common) trivial generations
    v = np.ones(n, dtype=np.int64)
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class Counterexample(OffspringLaw):
    """Rare large families on a constant population of size ``n``.

    With probability ``1 - p_n`` every parent has one child. Otherwise one
    uniform parent has ``r_n`` children, ``r_n - 1`` others have none and the
    rest have one.
    """

    alpha: float
    n: int | None = None
    name = "counterexample"

    def __post_init__(self):
        if not self.alpha > 0:
            raise LawProfileMismatch("alpha must be positive")
        if self.n is not None:
            self.params(self.n)

    def params(self, n: int) -> tuple[int, float]:
        if n < 2:
            raise LawProfileMismatch("counterexample needs n >= 2")
        log_n = math.log(n)
        r = math.floor(n / log_n**self.alpha)
        p = log_n ** (2 * self.alpha) / n
        if not (1 <= r <= n) or p > 1:
            raise LawProfileMismatch(f"counterexample undefined at n={n}")
        return r, p

    def check(self, q_s, q_s1):
        super().check(q_s, q_s1)
        if q_s != q_s1 or (self.n is not None and q_s != self.n):
            raise LawProfileMismatch("counterexample requires a constant profile q = n")

    def nontrivial_prob(self, n: int) -> float:
        return self.params(n)[1]

    def _nontrivial(self, n, rng):
        r, _ = self.params(n)
        perm = rng.permutation(n)
        v = np.ones(n, dtype=np.int64)
        v[perm[0]] = r
        v[perm[1:r]] = 0
        return v

    def sample(self, q_s, q_s1, rng):
        self.check(q_s, q_s1)
        _, p = self.params(q_s)
        if rng.random() >= p:
            return _all_ones(q_s)
        return self._nontrivial(q_s, rng)

    def sample_batch(self, q_s, q_s1, size, rng):
        self.check(q_s, q_s1)
        r, p = self.params(q_s)
        out = np.ones((size, q_s), dtype=np.int64)
        hit = np.flatnonzero(rng.random(size) < p)
        if len(hit):
            perms = rng.permuted(np.tile(np.arange(q_s), (len(hit), 1)), axis=1)
            rows = out[hit]
            np.put_along_axis(rows, perms[:, :1], r, axis=1)
            np.put_along_axis(rows, perms[:, 1:r], 0, axis=1)
            out[hit] = rows
        return out

    def _avoid(self, n: int, r: int, pool: int, m: int) -> float:
        """P(m given indices avoid a uniform (r-1)-subset of ``pool`` indices)."""
        if m + r - 1 > pool:
            return 0.0
        return math.exp(math.lgamma(pool - m + 1) - math.lgamma(pool - m - r + 2)
                        - math.lgamma(pool + 1) + math.lgamma(pool - r + 2))

    def factorial_moment(self, q_s, q_s1, orders):
        n = q_s
        r, p = self.params(n)
        m = len(orders)
        big = [a for a in orders if a >= 2]
        if len(big) > 1:
            return 0.0
        with_i0 = self._avoid(n, r, n - 1, m - 1)
        if big:
            return p / n * falling(r, big[0]) * with_i0
        without_i0 = self._avoid(n, r, n - 1, m) if m < n else 0.0
        return (1 - p) + p * (m / n * r * with_i0 + (n - m) / n * without_i0)

    def marginal_pmf(self, q_s, q_s1):
        n = q_s
        r, p = self.params(n)
        pmf = np.zeros(max(r, 1) + 1)
        pmf[r] += p / n
        pmf[0] += p * (r - 1) / n
        pmf[1] += 1.0 - p * r / n
        return pmf

    def place_lineages(self, q_s, q_s1, m, rng):
        self.check(q_s, q_s1)
        r, p = self.params(q_s)
        parents = np.arange(m)
        if rng.random() < p:
            y = rng.hypergeometric(r, q_s - r, m)
            if y > 1:
                parents[rng.choice(m, y, replace=False)] = -1
        return parents

    def to_dict(self):
        return {"law": self.name, "alpha": self.alpha}


def law_from_dict(d: dict) -> OffspringLaw:
    kind = d.get("law")
    if kind == "wright_fisher":
        return WrightFisher()
    if kind == "dirichlet_multinomial":
        return DirichletMultinomial(float(d["theta"]))
    if kind == "counterexample":
        return Counterexample(float(d["alpha"]), d.get("n"))
    raise LawProfileMismatch(f"unknown law {kind!r}")


def law_to_json(law: OffspringLaw) -> str:
    return json.dumps(law.to_dict())


def law_from_json(text: str) -> OffspringLaw:
    return law_from_dict(json.loads(text))


def sample_offspring(law: OffspringLaw, q_s: int, q_s1: int,
                     rng: np.random.Generator) -> np.ndarray:
    if q_s1 == 0:
        return np.zeros(q_s, dtype=np.int64)
    if q_s == 1:
        law.check(q_s, q_s1)
        return np.array([q_s1], dtype=np.int64)
    return law.sample(q_s, q_s1, rng)


@dataclass(frozen=True)
class MomentReport:
    """Moments of ``nu_1`` (and the pair ``nu_1, nu_2``) at one generation.

    ``cross22`` is the power moment ``E[nu_1^2 nu_2^2]``.
    """

    mean: float
    falling2: float
    sigma2: float
    third: float
    cross22: float
    mean_se: float = 0.0
    falling2_se: float = 0.0
    sigma2_se: float = 0.0
    third_se: float = 0.0
    cross22_se: float = 0.0

    def residual_22(self, q_s: int, q_s1: int) -> float:
        """``q_s1/(q_s-1) E[nu^3] - E[nu_1^2 nu_2^2]``; non-negative for every law."""
        return q_s1 / (q_s - 1) * self.third - self.cross22


def exact_moments(law: OffspringLaw, q_s: int, q_s1: int) -> MomentReport:
    law.check(q_s, q_s1)

    def f(*orders):
        return law.factorial_moment(q_s, q_s1, orders)

    mean = q_s1 / q_s
    f2 = f(2)
    third = f(3) + 3 * f2 + mean
    cross = float("nan") if q_s < 2 else f(2, 2) + f(2, 1) + f(1, 2) + f(1, 1)
    return MomentReport(mean=mean, falling2=f2, sigma2=f2 + mean - mean * mean,
                        third=third, cross22=cross)


def estimate_moments(law: OffspringLaw, q_s: int, q_s1: int, reps: int,
                     rng: np.random.Generator, chunk: int = 4096) -> MomentReport:
    if reps < 100:
        raise ValueError("estimate_moments needs at least 100 replicates")
    law.check(q_s, q_s1)
    firsts, seconds = [], []
    done = 0
    while done < reps:
        size = min(chunk, reps - done)
        batch = law.sample_batch(q_s, q_s1, size, rng)
        firsts.append(batch[:, 0].astype(float))
        seconds.append(batch[:, 1].astype(float) if q_s > 1 else np.zeros(size))
        done += size
    a = np.concatenate(firsts)
    b = np.concatenate(seconds)
    mean = a.mean()
    sq_dev = (a - mean) ** 2

    def est(x):
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))

    m, m_se = est(a)
    f2, f2_se = est(a * (a - 1))
    s2, s2_se = est(sq_dev * len(a) / (len(a) - 1))
    t, t_se = est(a**3)
    c, c_se = est(a * a * b * b) if q_s > 1 else (float("nan"), float("nan"))
    return MomentReport(m, f2, s2, t, c, m_se, f2_se, s2_se, t_se, c_se)


def coal_event_prob(law: OffspringLaw, q_s: int, q_s1: int,
                    multiplicities: Sequence[int]) -> float:
    """P(the first ``N_1`` of ``sum N`` distinct uniform children share one parent,
    the next ``N_2`` share another, ...), all parents distinct."""
    mult = [int(x) for x in multiplicities]
    if not mult or any(x < 1 for x in mult):
        raise InfeasibleEvent("multiplicities must be positive")
    total = sum(mult)
    if total > q_s1:
        raise InfeasibleEvent(f"{total} children requested from a generation of {q_s1}")
    if len(mult) > q_s:
        return 0.0
    if q_s == 1:
        return 1.0
    law.check(q_s, q_s1)
    return falling(q_s, len(mult)) * law.factorial_moment(q_s, q_s1, mult) / falling(q_s1, total)


def prob_distinct_parents(law: OffspringLaw, q_s: int, q_s1: int, m: int) -> float:
    return coal_event_prob(law, q_s, q_s1, [1] * m)


def estimate_coal_event_prob(law: OffspringLaw, q_s: int, q_s1: int,
                             multiplicities: Sequence[int], reps: int,
                             rng: np.random.Generator, chunk: int = 2048) -> tuple[float, float]:
    """Monte Carlo version of :func:`coal_event_prob` returning ``(p, se)``."""
    mult = list(multiplicities)
    total = sum(mult)
    groups = np.repeat(np.arange(len(mult)), mult)
    hits = 0
    done = 0
    while done < reps:
        size = min(chunk, reps - done)
        nu = law.sample_batch(q_s, q_s1, size, rng)
        ends = np.cumsum(nu, axis=1)
        kids = distinct_uniform(size, q_s1, total, rng)
        parents = (ends[:, None, :] <= kids[:, :, None]).sum(axis=2)
        ok = np.ones(size, dtype=bool)
        for g in range(len(mult)):
            cols = parents[:, groups == g]
            ok &= np.all(cols == cols[:, :1], axis=1)
        firsts = np.stack([parents[:, np.flatnonzero(groups == g)[0]] for g in range(len(mult))], axis=1)
        srt = np.sort(firsts, axis=1)
        ok &= np.all(np.diff(srt, axis=1) != 0, axis=1)
        hits += int(ok.sum())
        done += size
    p = hits / reps
    return p, math.sqrt(max(p * (1 - p), 1e-300) / reps)


def distinct_uniform(size: int, upper: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` rows of ``m`` distinct uniform integers in ``[0, upper)``."""
    if m > upper:
        raise InfeasibleEvent(f"cannot draw {m} distinct values below {upper}")
    if 4 * m > upper:
        return np.argsort(rng.random((size, upper)), axis=1)[:, :m]
    out = rng.integers(upper, size=(size, m))
    while True:
        srt = np.sort(out, axis=1)
        bad = np.flatnonzero(np.any(np.diff(srt, axis=1) == 0, axis=1))
        if not len(bad):
            return out
        out[bad] = rng.integers(upper, size=(len(bad), m))


def tail_second_moment(law: OffspringLaw, q_s: int, q_s1: int, cutoff: float) -> float:
    """``E[nu_1^2 ; nu_1 > cutoff]``."""
    pmf = law.marginal_pmf(q_s, q_s1)
    k = np.arange(len(pmf))
    return float(np.sum(pmf * k * k * (k > cutoff)))


def h_predicates(law: OffspringLaw, n_grid: Sequence[int], eps: float = 0.1,
                 cutoffs: Sequence[float] = (4.0, 16.0, 64.0)) -> dict:
    """Tabulate the moment ratios behind the regularity hypotheses on a
    constant population of size ``n`` and report their log-log trend.

    A slope is ``None`` when it is undefined (one grid point, or a zero value).
    """
    rows = []
    for n in n_grid:
        mom = exact_moments(law, n, n)
        log_n = math.log(n)
        m = max(2, math.floor(log_n ** (1 + eps)))
        p_merge = 1.0 - prob_distinct_parents(law, n, n, m)
        rows.append({
            "n": n,
            "third_log_ratio": mom.third * log_n ** (2 + eps) / n,
            "third_over_n": mom.third / n,
            "merge_proxy": p_merge * n / log_n ** (2 * (1 + eps)),
            **{f"tail_{c:g}": tail_second_moment(law, n, n, c) for c in cutoffs},
        })
    logs = np.log([r["n"] for r in rows])
    trend = {}
    for key in rows[0]:
        if key == "n":
            continue
        vals = np.array([r[key] for r in rows])
        if len(rows) > 1 and np.all(vals > 0):
            trend[key] = float(np.polyfit(logs, np.log(vals), 1)[0])
        else:
            trend[key] = None
    return {"rows": rows, "loglog_slope": trend}
