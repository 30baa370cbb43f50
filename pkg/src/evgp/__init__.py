"""Exact and Monte Carlo statistics of Jacobian entries of random ReLU networks."""
from .analyzer import (
    WidthFamily,
    advise,
    analyze,
    annealed_bound_2k,
    annealed_bounds_fourth,
    beta,
    chi1,
    classify_family,
    eta,
    quenched_bounds,
)
from .distributions import BiasKind, BiasLaw, DistributionSpec, TabulatedWeightLaw, WeightKind, WeightLaw
from .exact import (
    ExactValue,
    dp_fourth_moment,
    exact_second_moment,
    expected_empirical_variance_exact,
    mixed_fourth_general,
    mixed_fourth_same_output,
    oracle_mixed_moment,
    oracle_moment,
)
from .mc import MomentResult, SufficientStats, estimate_empirical_variance, estimate_frobenius, estimate_moments
from .net import Architecture, SampledNet, instantiate, jacobian_backprop, jacobian_pathsum

__version__ = "0.1.0"
