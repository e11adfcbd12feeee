"""Autobidding dynamics under return-over-spend constraints: dm_i/dt = U_i(m)."""

from .builders import RepressionGraph, build_coupled, build_cycle, build_edge_item, build_repressilator
from .circuits import BooleanNetwork, GateParams, compile_network, parse_network, read_assignment
from .dynamics import Trajectory, fundamental_identity_residual, integrate
from .linear import LinearSystem, competitive_embedding, compile_competitive_to_ros, simulate_linear
from .market import (Beta, Fixed, ItemSpec, MarketInstance, TieBreak, Zero, load_instance,
                     save_instance, validate_instance)
from .utility import Quadrature, UtilityModel, discrete_outcome, item_utility, smooth_item_utility, utilities

__all__ = [
    "Beta", "Fixed", "Zero", "TieBreak", "ItemSpec", "MarketInstance",
    "validate_instance", "load_instance", "save_instance",
    "Quadrature", "UtilityModel", "discrete_outcome", "smooth_item_utility", "item_utility", "utilities",
    "Trajectory", "integrate", "fundamental_identity_residual",
    "RepressionGraph", "build_edge_item", "build_repressilator", "build_cycle", "build_coupled",
    "LinearSystem", "competitive_embedding", "compile_competitive_to_ros", "simulate_linear",
    "BooleanNetwork", "GateParams", "parse_network", "compile_network", "read_assignment",
]
