"""Velocity-level constraint-based whole-body planner.

Every control period the planner linearizes a set of scalar task functions
(goal pose, object verticality, virtual-joint angle, collision distances,
joint limits) into rows ``lower <= g'qdot <= upper``, solves one strictly
convex QP for the joint velocities, and integrates with explicit Euler.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .kinematics import attach_pivot, build_robot, grasp_frame_from, home_configuration, object_capsule
from .qp import InfeasibleQP, solve_qp
from .scene import CollisionModel, spheres_box_distance
from .transforms import rotation_log

log = logging.getLogger(__name__)

FREE = "free"

SUCCESS = "success"
INFEASIBLE_START = "infeasible_start"
INFEASIBLE_GOAL = "infeasible_goal"
COLLISION_STUCK = "collision_stuck"
TIMEOUT = "timeout"
OUTCOMES = (SUCCESS, INFEASIBLE_START, INFEASIBLE_GOAL, COLLISION_STUCK, TIMEOUT)


class InfeasibleStep(InfeasibleQP):
    pass


@dataclass
class Constraint:
    name: str
    expression_value: float
    gradient: np.ndarray
    lower_rate: float
    upper_rate: float
    weight: float = 1.0
    hard: bool = False

    def __post_init__(self):
        if self.lower_rate > self.upper_rate:
            raise ValueError(f"constraint {self.name!r}: lower_rate > upper_rate")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError(f"constraint {self.name!r}: weight must be finite and >= 0")


@dataclass
class PlannerConfig:
    regularization: float = 1e-3
    goal_gain: float = 1.0
    goal_margin: float = 0.05
    goal_weight: float = 1.0
    verticality_gain: float = 2.0
    verticality_weight: float = 100.0
    collision_gain: float = 2.0
    safety_distance: float = 0.01
    sphere_band: float = 0.05
    limit_gain: float = 2.0
    position_tolerance: float = 0.005
    orientation_tolerance: float = 0.01
    stall_window: float = 2.0
    stall_improvement: float = 1e-4
    free_candidates: int = 17
    ik_max_duration: float = 20.0
    angle_length_scale: float = 0.1


@dataclass
class PlanRequest:
    scene: object
    object_name: str
    goal_pose: np.ndarray
    start_grasp_angle: object = 0.0
    goal_angle: object = FREE
    pivoting_enabled: bool = True
    timestep: float = 0.05
    max_duration: float = 60.0
    start_pose: np.ndarray = None
    seed: int = 0
    via_poses: tuple = ()

    def __post_init__(self):
        for label, a in (("start", self.start_grasp_angle), ("goal", self.goal_angle)):
            if a != FREE and not (-np.pi < float(a) <= np.pi):
                raise ValueError(f"{label} angle must be 'free' or in (-pi, pi]")
        if not self.timestep > 0:
            raise ValueError("timestep must be > 0")


@dataclass
class Trajectory:
    times: np.ndarray
    samples: np.ndarray
    joint_names: list
    pivot_index: int = None
    planning_time_s: float = 0.0
    converged: bool = False

    @property
    def timestep(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    def joint(self, name):
        return self.samples[:, self.joint_names.index(name)]

    @property
    def virtual_joint(self):
        if self.pivot_index is None:
            return None
        return self.samples[:, self.pivot_index]


@dataclass
class PlanResult:
    outcome: str
    trajectory: Trajectory = None
    chosen_start_angle: float = None
    chosen_goal_angle: float = None
    planning_time_s: float = 0.0
    max_constraints: int = 0
    info: dict = field(default_factory=dict)

    @property
    def success(self):
        return self.outcome == SUCCESS


def verticality_error(model, q, gravity, state=None):
    """Angle between gravity and the grasp-point -> CoG vector (radians)."""
    if model.pivot_joint_index is None:
        raise ValueError("verticality is only defined with the pivot joint attached")
    state = model.evaluate(q) if state is None else state
    c = state.frame("object")[:3, :3] @ np.asarray(model.object_cog_offset)
    g = np.asarray(gravity, dtype=float)
    cosang = c @ g / (np.linalg.norm(c) * np.linalg.norm(g))
    return float(np.arccos(np.clip(cosang, -1.0, 1.0)))


def _verticality_row(model, state, gravity):
    c = state.frame("object")[:3, :3] @ np.asarray(model.object_cog_offset)
    u = c / np.linalg.norm(c)
    gh = np.asarray(gravity, dtype=float) / np.linalg.norm(gravity)
    cosang = np.clip(u @ gh, -1.0, 1.0)
    e = float(np.arccos(cosang))
    axis = np.cross(u, gh)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        return e, np.zeros(model.dof)
    Jw = state.angular_jacobian("object")
    return e, -(axis / s) @ Jw


def _proportional_bounds(e, gain, margin):
    a, b = -gain * e * (1.0 + margin), -gain * e * (1.0 - margin)
    return min(a, b), max(a, b)


def object_pose_error(state, goal_pose):
    T = state.frame("object")
    ep = T[:3, 3] - goal_pose[:3, 3]
    eo = rotation_log(T[:3, :3] @ goal_pose[:3, :3].T)
    return ep, eo


def build_constraints(request, model, q, config=None, collision=None, state=None, distances=None,
                      goal_pose=None, goal_angle=None, pivoting_enabled=None, fixed_pivot=False):
    """Linearized constraint rows at configuration ``q``.

    Emits goal-pose rows, the verticality row (pivoting only), the virtual
    joint angle row (fixed goal angle only), one hard row per active
    collision pair and hard joint position/velocity limit rows.
    """
    config = config or PlannerConfig()
    state = model.evaluate(q) if state is None else state
    goal_pose = request.goal_pose if goal_pose is None else goal_pose
    goal_angle = request.goal_angle if goal_angle is None else goal_angle
    pivoting = request.pivoting_enabled if pivoting_enabled is None else pivoting_enabled
    gravity = request.scene.gravity
    n = model.dof
    rows = []
    k, m, w = config.goal_gain, config.goal_margin, config.goal_weight
    ep, eo = object_pose_error(state, goal_pose)
    Jv = state.jacobian("object")
    for i, axis in enumerate("xyz"):
        lo, hi = _proportional_bounds(ep[i], k, m)
        rows.append(Constraint(f"goal_pos_{axis}", float(ep[i]), Jv[i], lo, hi, w))
    for i, axis in enumerate("xyz"):
        lo, hi = _proportional_bounds(eo[i], k, m)
        rows.append(Constraint(f"goal_rot_{axis}", float(eo[i]), Jv[3 + i], lo, hi, w))
    pj = model.pivot_joint_index
    if pivoting and pj is not None:
        e, grad = _verticality_row(model, state, gravity)
        lo, hi = _proportional_bounds(e, config.verticality_gain, m)
        rows.append(Constraint("verticality", e, grad, lo, hi, config.verticality_weight))
    if pj is not None and goal_angle != FREE and not fixed_pivot:
        ea = float(q[pj] - goal_angle)
        g = np.zeros(n)
        g[pj] = 1.0
        lo, hi = _proportional_bounds(ea, k, m)
        rows.append(Constraint("virtual_joint_angle", ea, g, lo, hi, w))
    if collision is not None:
        if distances is None:
            distances = collision.distances(state)
        for r in distances:
            grad = r.normal @ _point_jacobian(state, r.link_a, r.center_a)
            if r.link_b is not None:
                grad = grad - r.normal @ _point_jacobian(state, r.link_b, r.center_b)
            rows.append(Constraint(f"collision:{r.name_a}|{r.name_b}", r.distance, grad,
                                   -config.collision_gain * (r.distance - config.safety_distance),
                                   np.inf, 0.0, hard=True))
    lo_lim, hi_lim = model.lower_limits(), model.upper_limits()
    vel = model.velocity_limits()
    eye = np.eye(n)
    for i, j in enumerate(model.joints):
        if j.limits is not None:
            rows.append(Constraint(f"position_limit:{j.name}", float(q[i]), eye[i],
                                   min(config.limit_gain * (lo_lim[i] - q[i]), 0.0),
                                   max(config.limit_gain * (hi_lim[i] - q[i]), 0.0), 0.0, hard=True))
        v = vel[i]
        if i == pj and (not pivoting or fixed_pivot):
            v = 0.0
        rows.append(Constraint(f"velocity_limit:{j.name}", float(q[i]), eye[i], -v, v, 0.0, hard=True))
    return rows


def _point_jacobian(state, link, point):
    mask = state.model.ancestor_mask(link)
    return state.point_jacobians(mask[None, :], point[None, :])[0]


def solve_step(constraints, dof, regularization=1e-3):
    """Joint velocities minimizing r|qdot|^2 + sum w s^2 under the rows.

    Soft rows get one slack each (lower <= g'qdot + s <= upper); hard rows
    none. Raises :class:`InfeasibleStep` when the hard rows conflict.
    """
    if not constraints or dof < 1:
        raise ValueError("need at least one constraint and one degree of freedom")
    soft = [c for c in constraints if not c.hard]
    ns = len(soft)
    nv = dof + ns
    Hd = np.empty(nv)
    Hd[:dof] = 2.0 * regularization
    Hd[dof:] = [2.0 * max(c.weight, 1e-9) for c in soft]
    A, b = [], []
    si = 0
    for c in constraints:
        row = np.zeros(nv)
        row[:dof] = c.gradient
        if not c.hard:
            row[dof + si] = 1.0
            si += 1
        if np.isfinite(c.lower_rate):
            A.append(row)
            b.append(c.lower_rate)
        if np.isfinite(c.upper_rate):
            A.append(-row)
            b.append(-c.upper_rate)
    try:
        x, _, _ = solve_qp(np.diag(Hd), np.zeros(nv), np.array(A).reshape(-1, nv), np.array(b))
    except InfeasibleQP as exc:
        raise InfeasibleStep(str(exc)) from None
    return x[:dof]


class Planner:
    """Plans for one object in one scene; caches start grasps per angle."""

    def __init__(self, scene, object_name, config=None):
        self.scene = scene
        self.object = scene.object(object_name)
        self.config = config or PlannerConfig()
        robot = build_robot(scene.robot)
        geometry = (object_capsule(self.object.half_extents, self.object.cog_offset),)
        self.model = attach_pivot(robot, grasp_frame_from(scene.robot), self.object.cog_offset, geometry)
        self.collision = CollisionModel(self.model, scene, band=self.config.sphere_band)
        self.robot_collision = CollisionModel(self.model, scene, include_object=False,
                                              band=self.config.sphere_band)
        self.home = np.append(home_configuration(scene.robot), 0.0)
        self._starts = {}

    @property
    def pivot_index(self):
        return self.model.pivot_joint_index

    def _integrate(self, q0, goal_pose, goal_angle, pivoting, fixed_pivot, collision, dt, max_duration,
                   record=True, via_poses=()):
        cfg = self.config
        targets = [np.asarray(v, dtype=float) for v in via_poses] + [goal_pose]
        goal_pose = targets.pop(0)
        q = q0.copy()
        samples = [q.copy()]
        n_steps = int(round(max_duration / dt))
        window = max(1, int(round(cfg.stall_window / dt)))
        history = []
        max_rows = 0
        pj = self.pivot_index
        request_stub = _RequestStub(self.scene, goal_pose, goal_angle, pivoting)
        outcome = TIMEOUT
        for step in range(n_steps + 1):
            state = self.model.evaluate(q)
            ep, eo = object_pose_error(state, goal_pose)
            ea = 0.0 if (goal_angle == FREE or fixed_pivot) else abs(q[pj] - goal_angle)
            if np.linalg.norm(ep) < cfg.position_tolerance and np.linalg.norm(eo) < cfg.orientation_tolerance:
                if targets:
                    goal_pose = targets.pop(0)
                    request_stub.goal_pose = goal_pose
                    history = []
                    ep, eo = object_pose_error(state, goal_pose)
                elif ea < cfg.orientation_tolerance:
                    outcome = SUCCESS
                    break
            metric = np.linalg.norm(ep) + cfg.angle_length_scale * (np.linalg.norm(eo) + ea)
            history.append(metric)
            distances = collision.distances(state) if collision is not None else []
            if len(history) > window and history[-1 - window] - metric < cfg.stall_improvement:
                near = any(r.distance < cfg.safety_distance + 0.05 for r in distances)
                outcome = COLLISION_STUCK if near else INFEASIBLE_GOAL
                break
            if step == n_steps:
                break
            rows = build_constraints(request_stub, self.model, q, cfg, collision, state, distances,
                                     goal_pose, goal_angle, pivoting, fixed_pivot)
            max_rows = max(max_rows, len(rows))
            qdot = solve_step(rows, self.model.dof, cfg.regularization)
            q = q + dt * qdot
            if record:
                samples.append(q.copy())
        return outcome, q, np.array(samples), max_rows

    def start_configuration(self, start_pose, angle):
        """Collision-free configuration grasping the object at ``start_pose`` with
        the virtual joint at ``angle``, or None."""
        key = (tuple(np.round(start_pose, 9).ravel()), round(float(angle), 12))
        if key in self._starts:
            return self._starts[key]
        q0 = self.home.copy()
        q0[self.pivot_index] = angle
        outcome, q, _, _ = self._integrate(q0, start_pose, FREE, False, True, self.robot_collision, 0.05,
                                           self.config.ik_max_duration, record=False)
        result = None
        if outcome == SUCCESS:
            if self.collision.min_distance(self.model.evaluate(q)) >= 0.0:
                result = q
        self._starts[key] = result
        return result

    def default_start_pose(self):
        obj = self.object
        if obj.start_xy is None:
            raise ValueError(f"object {obj.name!r} has no start placement")
        floor = self.scene.obstacle("floor").top if _has(self.scene, "floor") else 0.0
        clearance = float(self.scene.task.get("clearance", 0.02))
        return obj.placement(obj.start_xy, obj.start_yaw, floor, clearance)

    def plan(self, request):
        t0 = time.perf_counter()
        start_pose = request.start_pose if request.start_pose is not None else self.default_start_pose()
        goal_pose = np.asarray(request.goal_pose, dtype=float)
        if request.start_grasp_angle == FREE:
            rng = np.random.default_rng(request.seed)
            candidates = rng.uniform(-np.pi / 2, np.pi / 2, self.config.free_candidates)
        else:
            candidates = [float(request.start_grasp_angle)]
        q_start, chosen = None, None
        for a in candidates:
            q_start = self.start_configuration(start_pose, a)
            if q_start is not None:
                chosen = float(a)
                break
        if q_start is None:
            return PlanResult(INFEASIBLE_START, planning_time_s=time.perf_counter() - t0)
        if (not request.pivoting_enabled and request.goal_angle != FREE
                and abs(float(request.goal_angle) - chosen) > self.config.orientation_tolerance):
            # a rigid grasp keeps the start angle
            return PlanResult(INFEASIBLE_GOAL, chosen_start_angle=chosen,
                              planning_time_s=time.perf_counter() - t0)
        if self._goal_in_collision(q_start, goal_pose):
            return PlanResult(INFEASIBLE_GOAL, chosen_start_angle=chosen,
                              planning_time_s=time.perf_counter() - t0)
        try:
            outcome, q, samples, max_rows = self._integrate(
                q_start, goal_pose, request.goal_angle, request.pivoting_enabled, False, self.collision,
                request.timestep, request.max_duration, via_poses=request.via_poses)
        except InfeasibleStep as exc:
            log.debug("hard constraints infeasible: %s", exc)
            return PlanResult(COLLISION_STUCK, chosen_start_angle=chosen,
                              planning_time_s=time.perf_counter() - t0, info={"error": str(exc)})
        elapsed = time.perf_counter() - t0
        result = PlanResult(outcome, chosen_start_angle=chosen,
                            chosen_goal_angle=float(q[self.pivot_index]), planning_time_s=elapsed,
                            max_constraints=max_rows, info={"final_configuration": q})
        if outcome == SUCCESS:
            times = np.arange(len(samples)) * request.timestep
            result.trajectory = Trajectory(times, samples, self.model.joint_names, self.pivot_index,
                                           elapsed, True)
        return result

    def _goal_in_collision(self, q_start, goal_pose):
        obj = self.object
        geom = object_capsule(obj.half_extents, obj.cog_offset)
        pts = geom.sample_points(3) @ goal_pose[:3, :3].T + goal_pose[:3, 3]
        for box in self.scene.obstacles:
            d, *_ = spheres_box_distance(pts, geom.radius, box)
            if np.min(d) < 0.0:
                return True
        return False


@dataclass
class _RequestStub:
    scene: object
    goal_pose: np.ndarray
    goal_angle: object
    pivoting_enabled: bool


def _has(scene, name):
    return any(o.name == name for o in scene.obstacles)


def plan(request, config=None):
    """Plan one request from scratch (see :class:`Planner` for cached use)."""
    return Planner(request.scene, request.object_name, config).plan(request)
