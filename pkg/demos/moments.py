"""
Offspring moments and three-way coalescence
===========================================

The chance that three children have distinct parents is about
1 - 3 sigma^2 / q. Compare exact moments with simulated collisions and look
at the fourth-moment inequality for each law.
"""
import numpy as np

from cannings_lab import Counterexample, DirichletMultinomial, WrightFisher, exact_moments
from cannings_lab.verify import estimate_distinct3

rng = np.random.default_rng(2)
laws = {"wright-fisher": WrightFisher(), "dirichlet(0.5)": DirichletMultinomial(0.5),
        "counterexample": Counterexample(0.5)}

# The counterexample misses on purpose: its third moment grows like q, so
# collisions of three children are driven by rare giant families.

for name, law in laws.items():
    print(name)
    for q in (128, 512):
        m = exact_moments(law, q, q)
        p3, se = estimate_distinct3(law, q, q, 20_000, rng)
        est = q * (1 - p3) / 3
        print(f"  q={q:4d}  sigma^2 {m.sigma2:7.3f}  triple estimate {est:7.3f} +- {q * se / 3:.3f}"
              f"  E[nu^3]/q {m.third / q:7.4f}  residual {m.residual_22(q, q):9.3f}")
