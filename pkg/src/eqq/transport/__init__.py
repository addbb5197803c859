"""Transport costs: capacity-constrained, free (nearest site), exact 1D and boundary."""

from .core import (
    SOLVER_LIMIT,
    CapacitySolver,
    PointCloud,
    TransportPlan,
    cloud_csv,
    cost_record,
    nearest_assignment,
    nearest_assignment_cost,
    pair_costs,
    read_cloud,
    solve_uniform_capacity,
    w1d_exact,
    wb_boundary,
    write_cloud,
)
from .oracle import brute_force_oracle

__all__ = [
    "SOLVER_LIMIT",
    "CapacitySolver",
    "PointCloud",
    "TransportPlan",
    "brute_force_oracle",
    "cloud_csv",
    "cost_record",
    "nearest_assignment",
    "nearest_assignment_cost",
    "pair_costs",
    "read_cloud",
    "solve_uniform_capacity",
    "w1d_exact",
    "wb_boundary",
    "write_cloud",
]
