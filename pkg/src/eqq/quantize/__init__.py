"""Point-cloud quantizers: exact 1D, constructive, and Lloyd-type."""

from .centroid import group_p_centroids, p_centroid, weighted_p_centroid
from .constructions import (
    HexResult,
    PierceResult,
    chunk_1d,
    dim_induct,
    hex_2d,
    induction_constant,
    midpoint_1d,
    pierce_greedy,
    scale_copy,
)
from .lloyd import (
    METHODS,
    OptimizerConfig,
    QuantizerResult,
    best_quantizer,
    default_theta,
    empirical_cost,
    initial_points,
    lloyd_capacity,
    lloyd_classical,
    restart_rng,
)

__all__ = [
    "METHODS",
    "HexResult",
    "OptimizerConfig",
    "PierceResult",
    "QuantizerResult",
    "best_quantizer",
    "chunk_1d",
    "default_theta",
    "dim_induct",
    "empirical_cost",
    "group_p_centroids",
    "hex_2d",
    "induction_constant",
    "initial_points",
    "lloyd_capacity",
    "lloyd_classical",
    "midpoint_1d",
    "p_centroid",
    "pierce_greedy",
    "restart_rng",
    "scale_copy",
    "weighted_p_centroid",
]
