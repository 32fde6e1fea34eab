"""Population profiles, continuous and discrete.

A continuous profile is a piecewise-linear function on ``[0, h]`` given by its
knots. It is the limit object for generation sizes: the discrete profile at
scale ``n`` has ``q(s) ~ n * ell(s / n)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InteriorZero, NegativeValue, NonMonotonePositions, SigmaZeroInside

DEFAULT_REFINE = 16


@dataclass(frozen=True)
class ContinuousProfile:
    """Piecewise-linear function through ``knots``; zero from ``h`` onwards."""

    xs: np.ndarray
    vs: np.ndarray

    def __init__(self, knots: Sequence[Sequence[float]]):
        arr = np.asarray(knots, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise NonMonotonePositions("need at least two (position, value) knots")
        xs, vs = arr[:, 0].copy(), arr[:, 1].copy()
        if not np.all(np.isfinite(arr)):
            raise NonMonotonePositions("knots must be finite")
        if xs[0] != 0.0:
            raise NonMonotonePositions("first knot must sit at position 0")
        if np.any(np.diff(xs) <= 0):
            raise NonMonotonePositions("knot positions must be strictly increasing")
        if np.any(vs < 0):
            raise NegativeValue("profile values must be non-negative")
        if np.any(vs[1:-1] == 0):
            raise InteriorZero("interior knot values must be positive")
        if len(vs) == 2 and vs[0] == 0 and vs[1] == 0:
            raise InteriorZero("profile vanishes on the whole interval")
        xs.flags.writeable = False
        vs.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "vs", vs)

    @property
    def h(self) -> float:
        return float(self.xs[-1])

    @property
    def knots(self) -> list[list[float]]:
        return [[float(x), float(v)] for x, v in zip(self.xs, self.vs)]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xs, self.vs)
        out = np.where((x >= self.h) | (x < 0), 0.0, out)
        return out if out.ndim else float(out)

    def __eq__(self, other):
        if not isinstance(other, ContinuousProfile):
            return NotImplemented
        return np.array_equal(self.xs, other.xs) and np.array_equal(self.vs, other.vs)

    def __hash__(self):
        return hash((self.xs.tobytes(), self.vs.tobytes()))

    def segment_areas(self) -> np.ndarray:
        return 0.5 * np.diff(self.xs) * (self.vs[:-1] + self.vs[1:])

    def to_json(self) -> str:
        return json.dumps({"knots": self.knots})

    @classmethod
    def from_json(cls, text: str) -> "ContinuousProfile":
        return cls(json.loads(text)["knots"])

    @classmethod
    def constant(cls, value: float, h: float = 1.0) -> "ContinuousProfile":
        return cls([[0.0, value], [h, value]])


def integral(p: ContinuousProfile) -> float:
    """Exact integral of the piecewise-linear profile."""
    return float(np.sum(p.segment_areas()))


@dataclass(frozen=True)
class ProfilePair:
    """Height profile ``ell`` together with the variance profile ``sigma``."""

    ell: ContinuousProfile
    sigma: ContinuousProfile
    ratio_at_zero: float = field(default=float("nan"))

    def __post_init__(self):
        if self.ell.h != self.sigma.h:
            raise NonMonotonePositions("ell and sigma must share the same right endpoint")
        l0, s0 = float(self.ell.vs[0]), float(self.sigma.vs[0])
        if s0 == 0.0:
            # a piecewise-linear sigma vanishing at 0 makes ell/sigma^2 blow up
            raise SigmaZeroInside("sigma(0) = 0 gives an infinite ratio ell/sigma^2 at 0")
        if np.any(self.sigma.vs[1:-1] == 0):
            raise SigmaZeroInside("sigma vanishes inside (0, h)")
        implied = l0 / s0**2
        r = self.ratio_at_zero
        if math.isnan(r):
            object.__setattr__(self, "ratio_at_zero", implied)
        elif not math.isclose(r, implied, rel_tol=1e-12, abs_tol=1e-300):
            raise NonMonotonePositions(
                f"ratio_at_zero={r} disagrees with ell(0)/sigma(0)^2={implied}")

    @property
    def h(self) -> float:
        return self.ell.h

    @classmethod
    def constant(cls, ell: float = 1.0, sigma: float = 1.0, h: float = 1.0) -> "ProfilePair":
        return cls(ContinuousProfile.constant(ell, h), ContinuousProfile.constant(sigma, h))

    def scaled_rate(self, factor: float) -> "ProfilePair":
        """Pair whose merge rate sigma^2/ell is multiplied by ``factor``."""
        s = math.sqrt(factor)
        sig = ContinuousProfile([[x, v * s] for x, v in self.sigma.knots])
        return ProfilePair(self.ell, sig)


def refinement_grid(pair: ProfilePair, refine: int = DEFAULT_REFINE) -> np.ndarray:
    """Union of both knot sets, each interval split into ``refine`` pieces."""
    base = np.union1d(pair.ell.xs, pair.sigma.xs)
    pieces = [np.linspace(a, b, refine + 1)[:-1] for a, b in zip(base[:-1], base[1:])]
    return np.concatenate(pieces + [base[-1:]])


def ell_sigma(pair: ProfilePair, refine: int = DEFAULT_REFINE) -> ContinuousProfile:
    """The profile ``4 ell / sigma^2`` sampled on the refinement grid."""
    grid = refinement_grid(pair, refine)
    ell = np.interp(grid, pair.ell.xs, pair.ell.vs)
    sig = np.interp(grid, pair.sigma.xs, pair.sigma.vs)
    vals = np.empty_like(grid)
    vals[0] = 4.0 * pair.ratio_at_zero
    inner = slice(1, None)
    if np.any(sig[inner] == 0):
        if sig[-1] == 0 and ell[-1] == 0 and np.all(sig[1:-1] > 0):
            sig[-1], ell[-1] = sig[-2], ell[-2]
        else:
            raise SigmaZeroInside("sigma vanishes where ell does not")
    vals[inner] = 4.0 * ell[inner] / sig[inner] ** 2
    return ContinuousProfile(np.column_stack([grid, vals]))


@dataclass(frozen=True)
class DiscreteProfile:
    """Generation sizes ``q(1), ..., q(h_q - 1)``; ``q(0) = 1`` is implicit.

    ``n`` is the scale used to turn generations into heights ``s / n``.
    """

    sizes: np.ndarray
    n: int = 1

    def __init__(self, sizes: Sequence[int], n: int = 1):
        arr = np.asarray(sizes, dtype=np.int64).copy()
        if arr.ndim != 1 or len(arr) < 1:
            raise NegativeValue("need at least one generation")
        if np.any(arr < 1):
            raise NegativeValue("generation sizes must be positive")
        if n < 1:
            raise NegativeValue("scale must be positive")
        arr.flags.writeable = False
        object.__setattr__(self, "sizes", arr)
        object.__setattr__(self, "n", int(n))

    @property
    def h_q(self) -> int:
        return len(self.sizes) + 1

    def q(self, s: int) -> int:
        if s == 0:
            return 1
        if 1 <= s < self.h_q:
            return int(self.sizes[s - 1])
        return 0

    def full(self) -> np.ndarray:
        """Sizes indexed by generation, ``[q(0), ..., q(h_q - 1)]``."""
        return np.concatenate([[1], self.sizes]).astype(np.int64)

    @property
    def total(self) -> int:
        return 1 + int(self.sizes.sum())

    def is_constant(self) -> bool:
        return bool(np.all(self.sizes == self.sizes[0]))

    @classmethod
    def constant(cls, q: int, generations: int, n: int | None = None) -> "DiscreteProfile":
        return cls([q] * generations, n=q if n is None else n)


def discretize(ell: ContinuousProfile, n: int) -> DiscreteProfile:
    h_q = math.ceil(round(n * ell.h, 9))
    if h_q < 2:
        raise NegativeValue(f"scale n={n} leaves no generation below height {ell.h}")
    s = np.arange(1, h_q)
    sizes = np.maximum(1, np.floor(n * np.asarray(ell(s / n)) + 0.5)).astype(np.int64)
    return DiscreteProfile(sizes, n=n)


def sample_height(p: ContinuousProfile, u):
    """Inverse CDF of the density ``p / integral(p)`` at ``u`` in ``[0, 1]``."""
    u_arr = np.asarray(u, dtype=float)
    areas = p.segment_areas()
    cum = np.concatenate([[0.0], np.cumsum(areas)])
    target = np.clip(u_arr, 0.0, 1.0) * cum[-1]
    seg = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(areas) - 1)
    x0, v0 = p.xs[seg], p.vs[seg]
    width = p.xs[seg + 1] - x0
    slope = (p.vs[seg + 1] - v0) / width
    a = np.maximum(target - cum[seg], 0.0)
    disc = np.sqrt(np.maximum(v0 * v0 + 2.0 * slope * a, 0.0))
    denom = v0 + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, 2.0 * a / denom, 0.0)
    out = np.clip(x0 + np.minimum(t, width), 0.0, p.h)
    out = np.where(u_arr >= 1.0, p.h, out)
    return out if out.ndim else float(out)
