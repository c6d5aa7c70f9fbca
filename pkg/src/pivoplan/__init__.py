"""Whole-body pick-and-place planning with in-hand gripper pivoting."""

from .grasp_control import GraspController, LimitSurfaceParams
from .planner import FREE, PlanRequest, Planner, plan
from .scene import load_scene

__all__ = ["FREE", "GraspController", "LimitSurfaceParams", "PlanRequest", "Planner", "load_scene", "plan"]
__version__ = "0.1.0"
