"""
Walking a Cannings tree
=======================

Build a small Wright-Fisher tree, print its height and contour functions and
check that first-visit times and heights add up to twice the vertex index.
"""
import numpy as np

from cannings_lab import (ContinuousProfile, WrightFisher, build_tree, contour_function,
                          discretize, first_visit_times, height_function)

# A profile that swells in the middle: ell(x) rises from 1 to 2 and falls back.
ell = ContinuousProfile([[0, 1], [0.5, 2], [1, 1]])
profile = discretize(ell, 6)
print("generation sizes:", profile.full().tolist())

rng = np.random.default_rng(3)
tree = build_tree(profile, WrightFisher(), rng)
for s in range(1, tree.height):
    print(f"generation {s}: parents {tree.parents[s].tolist()}")

# Vertices are listed in lexicographic order; H is their depth.
H = height_function(tree)
C = contour_function(tree)
tau = first_visit_times(tree)
print("H  :", H.tolist())
print("C  :", C.tolist())
print("tau:", tau.tolist())
print("tau + H == 2i:", bool(np.array_equal(tau + H, 2 * np.arange(tree.size))))

# The gap between C(2i) and H(i) is of order one generation here; divided by n
# it shrinks as the trees grow.
idx = np.minimum(2 * np.arange(tree.size), len(C) - 1)
print("sup |C(2i) - H(i)| / n =", np.max(np.abs(C[idx] - H)) / tree.n)
