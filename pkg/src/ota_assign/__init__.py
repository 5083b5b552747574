"""Optimal-transport label assignment for iterative set-prediction detectors.

Many-to-one assignment with dynamic supplies and a stage-wise unit schedule,
a Hungarian one-to-one baseline, exact enumeration oracles, dynamic proposal
mixing, and a synthetic multi-stage simulator.
"""
from ._backend import BACKEND
from .assignment import (
    BACKGROUND,
    AssignmentResult,
    HardAssignment,
    SolverConfig,
    SupplyPlan,
    TransportPlan,
    apply_unit_increase,
    assign,
    assign_hungarian,
    assign_ota,
    cap_supplies,
    dynamic_k_estimate,
    exact_transport_oracle,
    harden,
    hungarian_match,
    sinkhorn_transport,
)
from .cost import CostMatrix, CostWeights, build_cost_matrix, classification_cost, regression_cost
from .geometry import Box, BoxList, giou, iou, l1_box_distance, nms

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BACKGROUND",
    "AssignmentResult",
    "Box",
    "BoxList",
    "CostMatrix",
    "CostWeights",
    "HardAssignment",
    "SolverConfig",
    "SupplyPlan",
    "TransportPlan",
    "apply_unit_increase",
    "assign",
    "assign_hungarian",
    "assign_ota",
    "build_cost_matrix",
    "cap_supplies",
    "classification_cost",
    "dynamic_k_estimate",
    "exact_transport_oracle",
    "giou",
    "harden",
    "hungarian_match",
    "iou",
    "l1_box_distance",
    "nms",
    "regression_cost",
    "sinkhorn_transport",
]
