"""
Lineages going down, discrete against limit
===========================================

Sample two points from large Wright-Fisher trees, record where their
ancestries meet, and set that against the limiting Kingman-type sampler.
"""
import math

import numpy as np

from cannings_lab import (PairRateClock, ProfilePair, WrightFisher, build_tree, discretize,
                          sample_k_point_subtree, sample_limit_subtree)

pair = ProfilePair.constant()  # ell = sigma = 1 on [0, 1]
n, reps = 128, 1500
rng = np.random.default_rng(0)
profile = discretize(pair.ell, n)

# The discrete side: one fresh tree per replicate.
discrete = np.array([sample_k_point_subtree(build_tree(profile, WrightFisher(), rng), 2, rng)
                     .branch_heights()[0] for _ in range(reps)])

# The limit side: leaf heights from ell, then pairs merge at rate sigma^2 / ell.
clock = PairRateClock.from_pair(pair)
limit = np.array([sample_limit_subtree(pair, 2, rng, clock).branch_heights()[0]
                  for _ in range(reps)])

# Two leaves only merge above the root with probability 1 - 2/e here.
print(f"P(branch above root): discrete {np.mean(discrete > 0):.3f}, "
      f"limit {np.mean(limit > 0):.3f}, exact {1 - 2 / math.e:.3f}")
for q in (0.8, 0.9, 0.95):
    print(f"quantile {q}: discrete {np.quantile(discrete, q):.3f}  limit {np.quantile(limit, q):.3f}")

# One limit tree in full.
tree = sample_limit_subtree(pair, 5, rng, clock)
print("leaves:", [round(x, 3) for x in tree.leaf_heights])
print("branch heights:", [round(x, 3) for x in tree.branch_heights()])
print("clusters at the root:", len(tree.root_order))
