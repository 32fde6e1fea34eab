"""
Coming down from infinity, and a law that does not
==================================================

Start from every individual of a generation and follow the number of
distinct ancestors down. Wright-Fisher collapses to a handful at every size;
the heavy-family counterexample keeps more and more lineages as n grows.
"""
import numpy as np

from cannings_lab import Counterexample, DiscreteProfile, WrightFisher, simulate_trace

rng = np.random.default_rng(1)

print("Wright-Fisher, count n/4 generations below h* = n/2")
for n in (128, 256, 512):
    profile = DiscreteProfile.constant(n, n)
    h_star = n // 2
    counts = [simulate_trace(profile, WrightFisher(), h_star, n, rng, stop=h_star - n // 4)
              .counts[-1] for _ in range(200)]
    print(f"  n={n:4d}  median {np.median(counts):4.0f}  95% {np.quantile(counts, 0.95):4.0f}")

print("Counterexample (alpha = 0.5), ancestors at generation 1 of the top generation")
law = Counterexample(0.5)
for n in (2**10, 2**12, 2**14):
    r, p = law.params(n)
    profile = DiscreteProfile.constant(n, n)
    counts = [simulate_trace(profile, law, n, n, rng, stop=1).counts[-1] for _ in range(200)]
    print(f"  n={n:5d}  family size r={r:5d}  p={p:.4f}  median X_1 {np.median(counts):5.0f}")
