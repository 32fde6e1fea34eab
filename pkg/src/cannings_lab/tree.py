"""Cannings trees and their lattice-path encodings.

Vertices of generation ``s`` are numbered ``0..q(s)-1`` in lexicographic
order. Because children of a parent are consecutive, the parent array of each
generation is non-decreasing and the whole tree is a list of such arrays.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import KTooLarge, LawProfileMismatch
from .ktree import KPointTree
from .offspring import OffspringLaw
from .profile import DiscreteProfile


@dataclass(eq=False)
class CanningsTree:
    """``parents[s][j]`` is the parent (in generation ``s - 1``) of vertex ``j``
    of generation ``s``; ``parents[0]`` is empty since the root has no parent."""

    profile: DiscreteProfile
    parents: list[np.ndarray] = field(repr=False)

    @classmethod
    def trusted(cls, profile: DiscreteProfile, parents: list[np.ndarray]) -> "CanningsTree":
        """Construct without re-validating arrays built by this module."""
        obj = cls.__new__(cls)
        obj.profile = profile
        obj.parents = parents
        return obj

    def __post_init__(self):
        if len(self.parents) != self.profile.h_q:
            raise LawProfileMismatch("one parent array per generation is required")
        for s in range(1, self.profile.h_q):
            par = self.parents[s]
            if len(par) != self.profile.q(s):
                raise LawProfileMismatch(f"generation {s} has the wrong size")
            if len(par) and (par[0] < 0 or par[-1] >= self.profile.q(s - 1)
                             or np.any(np.diff(par) < 0)):
                raise LawProfileMismatch(f"generation {s} parents are not lexicographic")

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def size(self) -> int:
        return self.profile.total

    @property
    def height(self) -> int:
        """Number of generations, ``h_q``."""
        return self.profile.h_q

    def offspring(self, s: int) -> np.ndarray:
        """Offspring vector of generation ``s``."""
        nxt = self.parents[s + 1] if s + 1 < self.height else np.empty(0, dtype=np.int64)
        return np.bincount(nxt, minlength=self.profile.q(s))

    @cached_property
    def offsets(self) -> np.ndarray:
        """Global index of the first vertex of each generation (generation-major)."""
        return np.concatenate([[0], np.cumsum(self.profile.full())])

    @cached_property
    def preorder(self) -> list[np.ndarray]:
        """Lexicographic (depth-first) rank of every vertex, per generation."""
        h = self.height
        sizes: list[np.ndarray] = [None] * h  # type: ignore[list-item]
        sizes[h - 1] = np.ones(self.profile.q(h - 1), dtype=np.int64)
        for s in range(h - 2, -1, -1):
            sizes[s] = 1 + np.bincount(self.parents[s + 1], weights=sizes[s + 1],
                                       minlength=self.profile.q(s)).astype(np.int64)
        ranks = [np.zeros(1, dtype=np.int64)]
        for s in range(1, h):
            par = self.parents[s]
            before = np.concatenate([[0], np.cumsum(sizes[s])[:-1]])
            first_child = np.searchsorted(par, par, side="left")
            ranks.append(ranks[s - 1][par] + 1 + before - before[first_child])
        return ranks

    def ancestor_path(self, s: int, j: int) -> np.ndarray:
        """Indices of the ancestors of ``(s, j)`` at generations ``0..s``."""
        path = np.empty(s + 1, dtype=np.int64)
        for g in range(s, 0, -1):
            path[g] = j
            j = int(self.parents[g][j])
        path[0] = 0
        return path

    def vertex(self, index: int) -> tuple[int, int]:
        s = int(np.searchsorted(self.offsets, index, side="right") - 1)
        return s, int(index - self.offsets[s])


def tree_from_offspring(profile: DiscreteProfile,
                        offspring: Sequence[Sequence[int]]) -> CanningsTree:
    """Tree with the given offspring vectors for generations ``1..h_q-2``."""
    sizes = profile.full()
    if len(offspring) != profile.h_q - 2:
        raise LawProfileMismatch("one offspring vector per generation 1..h_q-2 is required")
    parents = [np.empty(0, dtype=np.int64), np.zeros(sizes[1], dtype=np.int64)]
    for s, nu in enumerate(offspring, start=1):
        nu = np.asarray(nu, dtype=np.int64)
        if len(nu) != sizes[s] or nu.sum() != sizes[s + 1] or np.any(nu < 0):
            raise LawProfileMismatch(f"offspring vector of generation {s} does not fit")
        parents.append(np.repeat(np.arange(len(nu)), nu))
    return CanningsTree.trusted(profile, parents)


def build_tree(profile: DiscreteProfile, law: OffspringLaw,
               rng: np.random.Generator) -> CanningsTree:
    sizes = profile.full().tolist()
    parents = [np.empty(0, dtype=np.int64), np.zeros(sizes[1], dtype=np.int64)]
    parents += [law.sample_parents(sizes[s], sizes[s + 1], rng) for s in range(1, profile.h_q - 1)]
    return CanningsTree.trusted(profile, parents)


def height_function(tree: CanningsTree) -> np.ndarray:
    """``H[i]`` is the generation of the i-th vertex in lexicographic order."""
    out = np.empty(tree.size, dtype=np.int64)
    for s, ranks in enumerate(tree.preorder):
        out[ranks] = s
    return out


def contour_function(tree: CanningsTree) -> np.ndarray:
    """Depth along the depth-first walk, one unit step per edge traversal."""
    hgt = height_function(tree)
    if len(hgt) == 1:
        return np.zeros(1, dtype=np.int64)
    nxt = np.append(hgt[1:], 1)
    down = hgt - nxt + 1
    lengths = down + 1
    lengths[-1] = down[-1]
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    total = int(lengths.sum())
    seg = np.repeat(np.arange(len(hgt)), lengths)
    offset = np.arange(total) - starts[seg]
    vals = hgt[seg] - 1 - offset
    up = offset == down[seg]
    vals[up] = nxt[seg[up]]
    return np.concatenate([[0], vals])


def first_visit_times(tree: CanningsTree, contour: np.ndarray | None = None) -> np.ndarray:
    """Step at which the walk first reaches each vertex (lexicographic order)."""
    c = contour_function(tree) if contour is None else contour
    ups = np.flatnonzero(np.diff(c) > 0) + 1
    return np.concatenate([[0], ups])


def _order_and_branches(tree: CanningsTree, verts: list[tuple[int, int]]):
    paths = [tree.ancestor_path(s, j) for s, j in verts]

    def key(i):
        return tuple(paths[i].tolist())

    order = sorted(range(len(verts)), key=key)
    branch = []
    for a, b in zip(order[:-1], order[1:]):
        pa, pb = paths[a], paths[b]
        m = min(len(pa), len(pb))
        diff = np.flatnonzero(pa[:m] != pb[:m])
        branch.append((diff[0] - 1) if len(diff) else m - 1)
    return order, branch


def k_point_subtree(tree: CanningsTree, verts: Sequence[tuple[int, int]],
                    scale: float | None = None) -> KPointTree:
    """Subtree spanned by the root and ``verts``, heights divided by ``scale``."""
    n = float(tree.n if scale is None else scale)
    verts = [(int(s), int(j)) for s, j in verts]
    order, branch = _order_and_branches(tree, verts)
    return KPointTree.from_branch_heights([verts[i][0] / n for i in order],
                                          [b / n for b in branch])


def sample_vertices(tree: CanningsTree, k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    if k > tree.size:
        raise KTooLarge(f"cannot pick {k} distinct vertices out of {tree.size}")
    idx = rng.choice(tree.size, size=k, replace=False)
    return [tree.vertex(int(i)) for i in idx]


def sample_k_point_subtree(tree: CanningsTree, k: int, rng: np.random.Generator,
                           scale: float | None = None) -> KPointTree:
    return k_point_subtree(tree, sample_vertices(tree, k, rng), scale)


def lineage_counts(tree: CanningsTree, h_star: int, indices: Sequence[int]) -> np.ndarray:
    """Number of distinct ancestors of ``indices`` (generation ``h_star``) at
    generations ``h_star, h_star - 1, ..., 0``."""
    cur = np.unique(np.asarray(indices, dtype=np.int64))
    out = [len(cur)]
    for g in range(h_star, 0, -1):
        cur = np.unique(tree.parents[g][cur])
        out.append(len(cur))
    return np.array(out)


def net_radius_for(tree: CanningsTree, verts: Sequence[tuple[int, int]],
                   scale: float | None = None) -> float:
    """Largest distance from a vertex to the subtree spanned by root and ``verts``."""
    n = float(tree.n if scale is None else scale)
    marked = [np.zeros(tree.profile.q(s), dtype=bool) for s in range(tree.height)]
    marked[0][0] = True
    for s, j in verts:
        for g, a in enumerate(tree.ancestor_path(s, j)):
            marked[g][a] = True
    dist = np.zeros(1, dtype=np.int64)
    worst = 0
    for s in range(1, tree.height):
        dist = np.where(marked[s], 0, dist[tree.parents[s]] + 1)
        worst = max(worst, int(dist.max()))
    return worst / n


def net_radius(tree: CanningsTree, k: int, rng: np.random.Generator,
               scale: float | None = None) -> float:
    return net_radius_for(tree, sample_vertices(tree, k, rng), scale)


def tree_to_csv(tree: CanningsTree) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "child_index", "parent_index"])
    for s in range(1, tree.height):
        for j, p in enumerate(tree.parents[s].tolist()):
            w.writerow([s, j, p])
    return buf.getvalue()


def tree_from_csv(text: str, n: int = 1) -> CanningsTree:
    rows = list(csv.DictReader(io.StringIO(text)))
    by_gen: dict[int, list[int]] = {}
    for r in rows:
        by_gen.setdefault(int(r["generation"]), []).append(int(r["parent_index"]))
    gens = sorted(by_gen)
    if gens != list(range(1, len(gens) + 1)):
        raise LawProfileMismatch("generations must be 1..h_q-1 without gaps")
    profile = DiscreteProfile([len(by_gen[s]) for s in gens], n=n)
    parents = [np.empty(0, dtype=np.int64)] + [np.array(by_gen[s], dtype=np.int64) for s in gens]
    return CanningsTree(profile, parents)


def path_to_csv(values: Sequence[int]) -> str:
    return "".join(f"{int(v)}\n" for v in values)


def path_from_csv(text: str) -> np.ndarray:
    return np.array([int(x) for x in text.split()], dtype=np.int64)
