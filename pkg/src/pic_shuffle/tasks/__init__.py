"""Server-side permutation-equivariant tasks.

Task identifiers: ``"min_weight_matching"``, ``"max_matching"``, ``"radius_nn"``,
``"shapley_incentive"``, ``"identity"``.
"""
from .matching import (
    BipartiteInstance,
    Matching,
    max_matching_within_radius,
    min_weight_full_matching,
    success_ratio,
    travel_cost,
)
from .neighbors import NeighborSet, neighbor_f1, radius_nn, radius_pairs
from .shapley import (
    ShapleyVector,
    cosine_utility,
    gradient_aggregate,
    shapley_exact,
    shapley_monte_carlo,
)

TASKS = ("min_weight_matching", "max_matching", "radius_nn", "shapley_incentive", "identity")

__all__ = [
    "TASKS",
    "BipartiteInstance",
    "Matching",
    "NeighborSet",
    "ShapleyVector",
    "cosine_utility",
    "gradient_aggregate",
    "max_matching_within_radius",
    "min_weight_full_matching",
    "neighbor_f1",
    "radius_nn",
    "radius_pairs",
    "shapley_exact",
    "shapley_monte_carlo",
    "success_ratio",
    "travel_cost",
]
