"""Ancestral lineage counts, traced downward from a sampled generation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import groupby
from typing import Sequence

import numpy as np

from .errors import DeltaOutOfRange, InfeasibleCount
from .ktree import KPointTree
from .offspring import Counterexample, OffspringLaw, WrightFisher, coal_event_prob
from .profile import DiscreteProfile
from .tree import CanningsTree


@dataclass(frozen=True)
class CoalescentTrace:
    """``counts[i]`` is the number of ancestors at generation ``h_star - i``."""

    h_star: int
    k: int
    counts: np.ndarray

    def at(self, j: int) -> int:
        return int(self.counts[self.h_star - j])

    def to_csv(self) -> str:
        rows = [f"{self.h_star - i},{int(x)}\n" for i, x in enumerate(self.counts)]
        return "j,X_j\n" + "".join(rows)

    @classmethod
    def from_csv(cls, text: str) -> "CoalescentTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        counts = np.array([int(r["X_j"]) for r in rows], dtype=np.int64)
        return cls(int(rows[0]["j"]), int(counts[0]), counts)


@dataclass(frozen=True)
class MergeEvent:
    generation: int
    blocks_before: tuple[int, ...]
    blocks_after: int


@dataclass(frozen=True)
class MarkedTrace:
    trace: CoalescentTrace
    events: tuple[MergeEvent, ...] = field(default=())

    def to_json(self) -> str:
        return json.dumps([{"generation": e.generation, "blocks_before": list(e.blocks_before),
                            "blocks_after": e.blocks_after} for e in self.events])


def _check_count(q_prev: int, q_cur: int, m: int) -> None:
    if not 1 <= m <= q_cur:
        raise InfeasibleCount(f"cannot follow {m} lineages in a generation of {q_cur}")
    if q_prev < 1:
        raise InfeasibleCount("parent generation is empty")


def _parents(law: OffspringLaw, q_prev: int, q_cur: int, m: int,
             rng: np.random.Generator, method: str) -> np.ndarray:
    if q_prev == 1:
        return np.zeros(m, dtype=np.int64)
    if method == "fast":
        return law.place_lineages(q_prev, q_cur, m, rng)
    return OffspringLaw.place_lineages(law, q_prev, q_cur, m, rng)


def transition_sample(law: OffspringLaw, q_prev: int, q_cur: int, m: int,
                      rng: np.random.Generator, method: str = "offspring") -> list[list[int]]:
    """Partition of lineages ``0..m-1`` by shared parent, blocks in parent order."""
    _check_count(q_prev, q_cur, m)
    par = _parents(law, q_prev, q_cur, m, rng, method)
    order = np.argsort(par, kind="stable")
    return [[int(i) for i in grp] for _, grp in groupby(order.tolist(), key=lambda i: par[i])]


def _set_partition_counts(m: int):
    """Integer partitions of m with the number of set partitions of each shape."""
    def parts(rest, cap):
        if rest == 0:
            yield []
            return
        for a in range(min(rest, cap), 0, -1):
            for tail in parts(rest - a, a):
                yield [a] + tail

    for shape in parts(m, m):
        count = math.factorial(m)
        for a in shape:
            count //= math.factorial(a)
        for _, grp in groupby(shape):
            count //= math.factorial(len(list(grp)))
        yield shape, count


def transition_pmf(law: OffspringLaw, q_prev: int, q_cur: int, m: int) -> np.ndarray:
    """Exact law of the number of parents of ``m`` distinct uniform children."""
    _check_count(q_prev, q_cur, m)
    pmf = np.zeros(m + 1)
    for shape, count in _set_partition_counts(m):
        pmf[len(shape)] += count * coal_event_prob(law, q_prev, q_cur, shape)
    return pmf


def _count_step(law, q_prev, q_cur, m, rng, method):
    if m == 1:
        return 1
    if q_prev == 1:
        return 1
    if method == "offspring":
        nu = law.sample(q_prev, q_cur, rng)
        return int(np.count_nonzero(rng.multivariate_hypergeometric(nu, m)))
    return len(set(law.place_lineages(q_prev, q_cur, m, rng).tolist()))


def _fast_counterexample(law: Counterexample, profile, h_star, k, stop, rng):
    n = profile.q(1)
    r, p = law.params(n)
    steps = h_star - max(stop, 1)
    counts = np.full(h_star - stop + 1, k, dtype=np.int64)
    hits = np.flatnonzero(rng.random(steps) < p) if steps > 0 else np.empty(0, dtype=int)
    m = k
    for i in hits:
        if m > 1:
            y = rng.hypergeometric(r, n - r, m)
            if y > 1:
                m -= y - 1
                counts[i + 1:] = m
    if stop == 0:
        counts[-1] = 1
    return counts


def simulate_trace(profile: DiscreteProfile, law: OffspringLaw, h_star: int, k: int,
                   rng: np.random.Generator, stop: int = 0, method: str = "auto") -> CoalescentTrace:
    """Lineage counts from ``h_star`` down to generation ``stop``.

    ``method`` selects how each generation is resolved: ``"offspring"`` draws
    the full offspring vector and places lineages hypergeometrically,
    ``"fast"`` uses the law's direct lineage placement (same law), ``"auto"``
    picks the fast route for Wright-Fisher and the counterexample.
    """
    if not 1 <= h_star < profile.h_q:
        raise InfeasibleCount(f"h_star={h_star} outside 1..{profile.h_q - 1}")
    _check_count(profile.q(h_star - 1), profile.q(h_star), k)
    if method == "auto":
        method = "fast" if isinstance(law, (WrightFisher, Counterexample)) else "offspring"
    if method == "fast" and isinstance(law, Counterexample) and profile.is_constant():
        return CoalescentTrace(h_star, k, _fast_counterexample(law, profile, h_star, k, stop, rng))
    sizes = profile.full().tolist()
    counts = np.empty(h_star - stop + 1, dtype=np.int64)
    counts[0] = m = k
    for i, j in enumerate(range(h_star, stop, -1), start=1):
        if m == 1:
            counts[i:] = 1
            break
        m = _count_step(law, sizes[j - 1], sizes[j], m, rng, method)
        counts[i] = m
    return CoalescentTrace(h_star, k, counts)


def simulate_marked_trace(profile: DiscreteProfile, law: OffspringLaw, h_star: int,
                          k: int | None, rng: np.random.Generator,
                          leaf_generations: Sequence[int] | None = None,
                          method: str = "offspring") -> tuple[MarkedTrace, KPointTree]:
    """Follow labelled lineages to the root and record who merges with whom.

    With ``leaf_generations`` the i-th lineage enters at its own generation
    as a uniform vertex there. It may land on an existing lineage, in which
    case it is an ancestor of that lineage's leaves and merges at its own height.
    """
    gens = [h_star] * int(k) if leaf_generations is None else [int(g) for g in leaf_generations]
    if not gens or max(gens) != h_star or min(gens) < 0 or h_star >= profile.h_q or h_star < 1:
        raise InfeasibleCount("leaf generations must lie in 0..h_star with one at h_star")
    if gens.count(0) > 1:
        raise InfeasibleCount("only one leaf can sit at the root")
    n = float(profile.n)
    pending: dict[int, list[int]] = {}
    for i, g in enumerate(gens):
        pending.setdefault(g, []).append(i)
    merges: list[tuple[float, int, int, int]] = []
    next_id = len(gens)
    active: list[int] = []
    counts = []
    events: list[MergeEvent] = []

    def merge_run(height, members):
        nonlocal next_id
        node = members[0]
        for other in members[1:]:
            merges.append((height, node, other, next_id))
            node = next_id
            next_id += 1
        return node

    for j in range(h_star, 0, -1):
        q_j = profile.q(j)
        new = pending.get(j, [])
        if new:
            if len(active) + len(new) > q_j:
                raise InfeasibleCount(f"too many lineages at generation {j}")
            slots = rng.choice(q_j, size=len(new), replace=False).tolist()
            rng.shuffle(active)
            fresh = []
            for leaf, slot in zip(new, slots):
                if slot < len(active):
                    # the new leaf is an ancestor of the lineage sitting there
                    active[slot] = merge_run(j / n, [leaf, active[slot]])
                else:
                    fresh.append(leaf)
            active.extend(fresh)
        counts.append(len(active))
        m = len(active)
        if j == 1:
            break
        if m > 1:
            blocks = transition_sample(law, profile.q(j - 1), q_j, m, rng, method=method)
            if len(blocks) < m:
                events.append(MergeEvent(j, tuple(len(b) for b in blocks), len(blocks)))
            nxt = []
            for b in blocks:
                members = [active[i] for i in b]
                rng.shuffle(members)
                nxt.append(merge_run((j - 1) / n, members))
            active = nxt
    if len(active) > 1:
        events.append(MergeEvent(1, (len(active),), 1))
    root_order = list(active)
    rng.shuffle(root_order)
    if 0 in pending:
        root_order.insert(0, pending[0][0])
    counts.append(1)
    trace = CoalescentTrace(h_star, len(pending[h_star]), np.array(counts, dtype=np.int64))
    tree = KPointTree.from_forest([g / n for g in gens], merges, root_order)
    return MarkedTrace(trace, tuple(events)), tree


def delta_coalescent_count(tree: CanningsTree, delta: float) -> int:
    """Number of vertices at heights ``s * step`` (``step = floor(delta n)``)
    that have a descendant at height ``(s + 1) * step``, over ``1 <= s <= H - 2``."""
    n = tree.n
    step = math.floor(delta * n)
    if step < 1 or delta * n >= tree.height:
        raise DeltaOutOfRange(f"delta={delta} out of range for n={n}, h_q={tree.height}")
    big_h = tree.height // step
    total = 0
    for s in range(1, big_h - 1):
        lo, hi = s * step, (s + 1) * step
        cur = np.arange(tree.profile.q(hi))
        for g in range(hi, lo, -1):
            cur = np.unique(tree.parents[g][cur])
        total += len(cur)
    return total
