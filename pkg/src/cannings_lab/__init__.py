"""Simulation and limit checks for trees of inhomogeneous Cannings models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .profile import (ContinuousProfile, DiscreteProfile, ProfilePair, discretize,  # noqa: F401
                      ell_sigma, integral, sample_height)
from .offspring import (Counterexample, DirichletMultinomial, MomentReport,  # noqa: F401
                        OffspringLaw, WrightFisher, coal_event_prob, estimate_moments,
                        exact_moments, sample_offspring)
from .ktree import KPointTree, Merge  # noqa: F401
from .tree import (CanningsTree, build_tree, contour_function, first_visit_times,  # noqa: F401
                   height_function, net_radius, sample_k_point_subtree)
from .coalescent import (CoalescentTrace, MarkedTrace, delta_coalescent_count,  # noqa: F401
                         simulate_marked_trace, simulate_trace, transition_sample)
from .limit import (PairRateClock, continuous_block_count, kingman_clock_invert,  # noqa: F401
                    piecewise_kingman_tree, sample_limit_subtree)
