"""Planning baselines and the controller that executes their plans."""

from .common import PlanResult
from .follow import PathFollower, follow
from .lattice import LatticeConfig, MotionPrimitive, astar_plan, coarse_feasible, dijkstra_plan
from .rrtstar import RRTConfig, rrtstar_plan

__all__ = [
    "PlanResult",
    "PathFollower",
    "follow",
    "LatticeConfig",
    "MotionPrimitive",
    "astar_plan",
    "coarse_feasible",
    "dijkstra_plan",
    "RRTConfig",
    "rrtstar_plan",
]
