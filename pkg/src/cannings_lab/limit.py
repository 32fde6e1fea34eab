"""Samplers for the limiting k-point trees.

Going down from a height ``a``, each pair of lineages merges at rate
``r(s) = sigma(s)^2 / ell(s)``. The integrated rate is tabulated once per
profile pair, so a waiting time is one table lookup and one quadratic solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import HeightOutOfRange
from .ktree import KPointTree
from .profile import DEFAULT_REFINE, ProfilePair, refinement_grid, sample_height

FLOOR = 1e-12
GEOMETRIC_PER_DECADE = 32


@dataclass(frozen=True)
class PairRateClock:
    """Pair merge rate ``r``, linear between ``grid`` points, and its integral.

    ``hazard[i]`` is the integral of ``r`` from ``grid[0]`` to ``grid[i]``.
    """

    grid: np.ndarray
    rates: np.ndarray
    hazard: np.ndarray

    @classmethod
    def from_samples(cls, grid, rates) -> "PairRateClock":
        grid = np.asarray(grid, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if np.any(np.diff(grid) <= 0) or np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise HeightOutOfRange("rate table must be finite on an increasing grid")
        cells = 0.5 * np.diff(grid) * (rates[:-1] + rates[1:])
        return cls(grid, rates, np.concatenate([[0.0], np.cumsum(cells)]))

    @classmethod
    def constant(cls, rate: float, h: float = 1.0) -> "PairRateClock":
        return cls.from_samples([0.0, h], [rate, rate])

    @classmethod
    def from_pair(cls, pair: ProfilePair, refine: int = DEFAULT_REFINE) -> "PairRateClock":
        grid = refinement_grid(pair, refine)
        h = pair.h

        def rate(x):
            ell = np.interp(x, pair.ell.xs, pair.ell.vs)
            sig = np.interp(x, pair.sigma.xs, pair.sigma.vs)
            with np.errstate(divide="ignore"):
                return sig * sig / ell

        vals = rate(grid)
        lo, hi = grid[0], grid[-1]
        extra = []
        if not np.isfinite(vals[0]):
            lo = FLOOR
            decades = max(1, math.ceil(math.log10(grid[1] / FLOOR)))
            extra.append(np.geomspace(FLOOR, grid[1], decades * GEOMETRIC_PER_DECADE + 1)[:-1])
        if not np.isfinite(vals[-1]):
            hi = h * (1 - FLOOR)
            gap = h - grid[-2]
            decades = max(1, math.ceil(math.log10(gap / (h - hi))))
            pts = h - np.geomspace(gap, h - hi, decades * GEOMETRIC_PER_DECADE + 1)
            extra.append(pts[1:])
        inner = grid[(grid > lo) & (grid < hi)]
        pts = np.unique(np.concatenate([[lo], inner, [hi], *extra]))
        return cls.from_samples(pts, rate(pts))

    @property
    def top(self) -> float:
        return float(self.grid[-1])

    def _cell(self, x):
        return np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, len(self.grid) - 2)

    def cumulative(self, x) -> np.ndarray | float:
        """Integral of the rate from the bottom of the table up to ``x``."""
        x = np.clip(np.asarray(x, dtype=float), self.grid[0], self.grid[-1])
        i = self._cell(x)
        x0, r0 = self.grid[i], self.rates[i]
        slope = (self.rates[i + 1] - r0) / (self.grid[i + 1] - x0)
        t = x - x0
        out = self.hazard[i] + r0 * t + 0.5 * slope * t * t
        return out if out.ndim else float(out)

    def integral(self, lo: float, hi: float) -> float:
        return float(self.cumulative(hi) - self.cumulative(lo))

    def max_rate(self) -> float:
        return float(self.rates.max())


def kingman_clock_invert(clock: PairRateClock, start_height: float, hazard: float) -> float:
    """Height ``b <= start_height`` with ``integral(r, b, start_height) = hazard``.

    Returns 0 when the rate accumulated down to the bottom falls short.
    """
    if hazard < 0:
        raise ValueError("hazard must be non-negative")
    if not 0 < start_height <= clock.top * (1 + 1e-12) + FLOOR:
        raise HeightOutOfRange(f"start height {start_height} outside (0, {clock.top}]")
    start = min(start_height, clock.top)
    target = clock.cumulative(start) - hazard
    if hazard == 0:
        return start_height
    if target <= 0:
        return 0.0
    i = int(np.clip(np.searchsorted(clock.hazard, target, side="right") - 1, 0, len(clock.grid) - 2))
    x0, r0 = clock.grid[i], clock.rates[i]
    width = clock.grid[i + 1] - x0
    slope = (clock.rates[i + 1] - r0) / width
    a = target - clock.hazard[i]
    disc = math.sqrt(max(r0 * r0 + 2.0 * slope * a, 0.0))
    denom = r0 + disc
    t = 2.0 * a / denom if denom > 0 else 0.0
    return float(min(max(x0 + min(t, width), 0.0), start))


def _clock(pair_or_clock) -> PairRateClock:
    if isinstance(pair_or_clock, PairRateClock):
        return pair_or_clock
    return PairRateClock.from_pair(pair_or_clock)


def _forest(clock: PairRateClock, heights: Sequence[float], rng: np.random.Generator):
    hs = [float(x) for x in heights]
    top = clock.top
    for x in hs:
        if not 0 < x <= top * (1 + 1e-12) + FLOOR:
            raise HeightOutOfRange(f"leaf height {x} outside (0, {top})")
    order = sorted(range(len(hs)), key=lambda i: -hs[i])
    merges: list[tuple[float, int, int, int]] = []
    next_id = len(hs)
    active: list[int] = []
    for pos, leaf in enumerate(order):
        active.append(leaf)
        a = hs[leaf]
        floor = hs[order[pos + 1]] if pos + 1 < len(order) else 0.0
        while len(active) > 1:
            m = len(active)
            b = kingman_clock_invert(clock, a, rng.exponential() / (m * (m - 1) / 2))
            if b <= floor:
                break
            i, j = rng.choice(m, size=2, replace=False)
            left, right = (active[i], active[j]) if rng.random() < 0.5 else (active[j], active[i])
            merges.append((b, left, right, next_id))
            active = [c for c in active if c not in (left, right)] + [next_id]
            next_id += 1
            a = b
    root_order = [active[i] for i in rng.permutation(len(active))]
    return KPointTree.from_forest(hs, merges, root_order)


def piecewise_kingman_tree(pair_or_clock, leaf_heights: Sequence[float],
                           rng: np.random.Generator) -> KPointTree:
    """Ordered tree from a Kingman coalescent run downward from the highest
    leaf, with a new lineage entering at every leaf height and all survivors
    gathered in uniform order at height 0."""
    return _forest(_clock(pair_or_clock), leaf_heights, rng)


def sample_leaf_heights(pair: ProfilePair, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` iid heights with density ``ell / integral(ell)``, inside ``(0, h)``."""
    out = np.asarray(sample_height(pair.ell, rng.random(k)), dtype=float)
    bad = (out <= 0) | (out >= pair.h)
    while np.any(bad):
        out[bad] = sample_height(pair.ell, rng.random(int(bad.sum())))
        bad = (out <= 0) | (out >= pair.h)
    return out


def sample_limit_subtree(pair: ProfilePair, k: int, rng: np.random.Generator,
                         clock: PairRateClock | None = None) -> KPointTree:
    clock = PairRateClock.from_pair(pair) if clock is None else clock
    return _forest(clock, sample_leaf_heights(pair, k, rng), rng)


def continuous_block_count(pair_or_clock, h_star: float, k: int,
                           rng: np.random.Generator) -> list[tuple[float, int]]:
    """Jump chain ``[(time, count), ...]`` of a Kingman block counter started
    with ``k`` blocks at height ``h_star`` and run down to height 0.

    Time ``t`` corresponds to height ``h_star - t``.
    """
    clock = _clock(pair_or_clock)
    out = [(0.0, k)]
    a = float(h_star)
    m = k
    while m > 1:
        b = kingman_clock_invert(clock, a, rng.exponential() / (m * (m - 1) / 2))
        if b <= 0:
            break
        m -= 1
        a = b
        out.append((h_star - b, m))
    return out


def first_jump_time(path: list[tuple[float, int]], horizon: float) -> float:
    """Time of the first jump, or ``horizon`` if the chain never moved."""
    return path[1][0] if len(path) > 1 else horizon
