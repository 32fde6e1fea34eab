"""Ordered metric trees spanned by k marked points.

A :class:`KPointTree` is stored in canonical form: leaves are numbered in
left-to-right order, merges above height 0 are binary (a multi-way merge is a
run of binary merges at one height) and ``root_order`` lists the clusters
gathered at height 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Merge:
    height: float
    left: int
    right: int
    id: int


@dataclass(frozen=True)
class KPointTree:
    leaf_heights: tuple[float, ...]
    merges: tuple[Merge, ...]
    root_order: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.leaf_heights)

    @classmethod
    def from_branch_heights(cls, leaf_heights: Sequence[float],
                            branch_heights: Sequence[float]) -> "KPointTree":
        """Build the tree whose i-th and (i+1)-th leaves meet at ``branch_heights[i]``."""
        leaves = [float(x) for x in leaf_heights]
        gaps = [float(x) for x in branch_heights]
        if len(gaps) != max(len(leaves) - 1, 0):
            raise ValueError("need k - 1 branch heights")
        merges: list[Merge] = []
        next_id = [len(leaves)]

        def build(lo: int, hi: int) -> int:
            if lo == hi:
                return lo
            inner = gaps[lo:hi]
            low = min(inner)
            cuts = [lo + i for i, g in enumerate(inner) if g == low]
            bounds = [lo] + [c + 1 for c in cuts]
            ends = cuts + [hi]
            parts = [build(a, b) for a, b in zip(bounds, ends)]
            node = parts[0]
            for other in parts[1:]:
                merges.append(Merge(low, node, other, next_id[0]))
                node = next_id[0]
                next_id[0] += 1
            return node

        k = len(leaves)
        if k == 0:
            return cls((), (), ())
        roots_cut = [i for i, g in enumerate(gaps) if g <= 0.0]
        bounds = [0] + [c + 1 for c in roots_cut]
        ends = roots_cut + [k - 1]
        for g in roots_cut:
            gaps[g] = 0.0
        root_order = tuple(build(a, b) for a, b in zip(bounds, ends))
        return cls(tuple(leaves), tuple(merges), root_order)

    @classmethod
    def from_forest(cls, leaf_heights: Sequence[float],
                    merges: Sequence[tuple[float, int, int, int]],
                    root_order: Sequence[int]) -> "KPointTree":
        """Canonicalize an arbitrary binary merge forest.

        ``merges`` holds ``(height, left, right, id)`` with leaves ``0..k-1``.
        """
        children = {m[3]: (m[0], m[1], m[2]) for m in merges}
        order: list[int] = []
        gaps: list[float] = []

        def walk(node: int):
            if node in children:
                height, left, right = children[node]
                walk(left)
                gaps.append(height)
                walk(right)
            else:
                order.append(node)

        for i, top in enumerate(root_order):
            if i:
                gaps.append(0.0)
            walk(top)
        heights = [float(leaf_heights[i]) for i in order]
        return cls.from_branch_heights(heights, gaps)

    def branch_heights(self) -> list[float]:
        """Height of the branch point of consecutive leaves, left to right."""
        children = {m.id: m for m in self.merges}
        gaps: list[float] = []

        def walk(node: int):
            if node in children:
                m = children[node]
                walk(m.left)
                gaps.append(m.height)
                walk(m.right)

        for i, top in enumerate(self.root_order):
            if i:
                gaps.append(0.0)
            walk(top)
        return gaps

    def distance_vector(self) -> np.ndarray:
        """Distances ``(d(b_{i-1}, V_i), d(b_0, b_i))`` for ``i = 1..k``.

        ``b_0 = b_k`` is the root and ``b_i`` is the branch point of leaves
        ``i`` and ``i + 1``. The vector determines the tree and is the
        coordinate system used for finite-dimensional comparisons.
        """
        b = [0.0] + self.branch_heights() + [0.0]
        out = []
        for i, x in enumerate(self.leaf_heights):
            out.append(x - b[i])
            out.append(b[i + 1])
        return np.array(out)

    def check(self, strict: bool = True) -> None:
        """Raise ``AssertionError`` unless the canonical-form invariants hold.

        With ``strict`` every merge lies strictly below the leaves it joins;
        otherwise a leaf may coincide with a branch point (discrete trees).
        Merges in a run at one height are always allowed.
        """
        k = self.k
        seen = set()
        low = {i: self.leaf_heights[i] for i in range(k)}
        for m in self.merges:
            assert m.id == k + len(seen), "merge ids must be consecutive"
            assert m.left in low and m.right in low, "merge refers to unknown cluster"
            assert m.height > 0, "merges above the root need positive height"
            for c in (m.left, m.right):
                if strict and c < k:
                    assert m.height < low[c], "merge above a leaf"
                else:
                    assert m.height <= low[c], "merge above a subtree"
            low[m.id] = m.height
            del low[m.left], low[m.right]
            seen.add(m.id)
        assert sorted(low) == sorted(self.root_order), "root must gather all survivors"
        flat = []

        def walk(node):
            for m in self.merges:
                if m.id == node:
                    walk(m.left)
                    walk(m.right)
                    return
            flat.append(node)

        for top in self.root_order:
            walk(top)
        assert flat == list(range(k)), "leaves must be numbered left to right"

    def to_dict(self) -> dict:
        return {
            "leaves": list(self.leaf_heights),
            "merges": [{"height": m.height, "left": m.left, "right": m.right, "id": m.id}
                       for m in self.merges],
            "root_order": list(self.root_order),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "KPointTree":
        merges = tuple(Merge(float(m["height"]), int(m["left"]), int(m["right"]), int(m["id"]))
                       for m in d["merges"])
        return cls(tuple(float(x) for x in d["leaves"]), merges,
                   tuple(int(x) for x in d["root_order"]))

    @classmethod
    def from_json(cls, text: str) -> "KPointTree":
        return cls.from_dict(json.loads(text))
