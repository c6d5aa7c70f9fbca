"""Grasped object as a friction-damped pendulum about the closing axis.

The object hangs from the grasp point and can rotate relative to the
fingers about the closing axis. Friction between pad and object is governed
by the true limit surface: the torque the contact can resist shrinks with
the tangential load it already carries. While the object rotates on the
pads, maximum dissipation on the elliptical limit surface also makes it
creep translationally along the pads; once the accumulated creep exceeds the
distance from the grasp point to the object's top, or the tangential load
alone exceeds the contact capacity, the object has slipped out.
"""

from dataclasses import dataclass, field

import numpy as np

from .grasp_control import tau_max
from .transforms import axis_angle_matrix, rotation_log

DT = 0.002


@dataclass
class SliderState:
    theta: float
    theta_dot: float = 0.0
    slipped_out: bool = False
    creep: float = 0.0
    friction_torque: float = 0.0
    ft_load: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.theta_dot)):
            raise ValueError("slider state must be finite")


@dataclass
class PivotSimInput:
    """Gripper orientations (grasp frame in world, one per 2 ms step) and the
    commanded grasp force per step."""

    gripper_orientation_trace: np.ndarray
    fn_trace: np.ndarray
    object: object
    true_params: object
    theta0: float = 0.0
    pivot_axis: tuple = (0.0, -1.0, 0.0)
    gravity: tuple = (0.0, 0.0, -9.81)
    accel_trace: np.ndarray = None
    dt: float = DT


@dataclass
class PivotSimResult:
    states: list
    deviations: np.ndarray
    final_deviation: float
    slipped_out: bool
    rows: list = field(default_factory=list)


class PivotGeometry:
    """Object kinematics relative to the gripper (grasp) frame."""

    def __init__(self, obj, pivot_axis=(0.0, -1.0, 0.0), gravity=(0.0, 0.0, -9.81)):
        self.obj = obj
        self.axis = np.asarray(pivot_axis, dtype=float) / np.linalg.norm(pivot_axis)
        self.cog = np.asarray(obj.cog_offset, dtype=float)
        self.gravity = np.asarray(gravity, dtype=float)

    def object_rotation(self, R_grip, theta):
        return R_grip @ axis_angle_matrix(self.axis, theta)

    def cog_world(self, R_grip, theta):
        return self.object_rotation(R_grip, theta) @ self.cog

    def deviation(self, R_grip, theta):
        c = self.cog_world(R_grip, theta)
        g = self.gravity
        return float(np.arccos(np.clip(c @ g / (np.linalg.norm(c) * np.linalg.norm(g)), -1.0, 1.0)))

    def loads(self, R_grip, theta, accel=None):
        """(gravity torque about the axis, tangential load magnitude, world axis)."""
        m = self.obj.mass
        g_eff = self.gravity - (np.zeros(3) if accel is None else np.asarray(accel, dtype=float))
        a = R_grip @ self.axis
        c = self.cog_world(R_grip, theta)
        torque = float(a @ np.cross(c, m * g_eff))
        f = m * g_eff
        ft = float(np.linalg.norm(f - (f @ a) * a))
        return torque, ft, a


def angular_rate_about(R0, R1, axis_world, dt):
    return float(rotation_log(R1 @ R0.T) @ axis_world / dt)


def creep_rate(fn, ft, params):
    """Translational creep per radian of rotational sliding (m/rad)."""
    cap = params.mu * fn
    if cap <= 0:
        return np.inf
    rho = ft / cap
    if rho >= 1.0:
        return np.inf
    return float(tau_max(fn, params) / cap * rho / np.sqrt(1.0 - rho * rho))


def drop_distance(obj):
    """Distance the pads may creep before leaving the object's top face."""
    return float(obj.half_extents[2] + obj.cog_offset[2])


def step(state, gripper_orientation, fn, dt, object, true_params, geometry=None, omega_g=0.0,
         omega_g_dot=0.0, accel=None, disturbance=(0.0, 0.0)):
    """Advance the slider one step (semi-implicit Euler).

    ``omega_g``/``omega_g_dot`` are the gripper angular rate and acceleration
    about the pivot axis; ``disturbance`` adds (tangential N, torque N m).
    """
    if fn < 0:
        raise ValueError("fn must be >= 0")
    geo = geometry or PivotGeometry(object)
    I = object.inertia_about_pivot
    tg, ft, _ = geo.loads(gripper_orientation, state.theta, accel)
    tg += disturbance[1]
    ft = max(ft + disturbance[0], 0.0)
    slipped = state.slipped_out
    cap_t = true_params.mu * fn
    if ft > cap_t and (ft > 0):
        slipped = True
    rho = min(ft / cap_t, 1.0) if cap_t > 0 else 1.0
    cap = float(tau_max(fn, true_params)) * np.sqrt(1.0 - rho * rho)
    theta_dot = state.theta_dot
    if theta_dot == 0.0:
        need = I * omega_g_dot - tg
        if abs(need) <= cap:
            return SliderState(state.theta, 0.0, slipped, state.creep, abs(need), ft)
        tf = np.sign(need) * cap
    else:
        tf = -np.sign(theta_dot) * cap
    acc = (tg + tf) / I - omega_g_dot
    new_dot = theta_dot + acc * dt
    if cap > 0 and theta_dot != 0.0 and new_dot * theta_dot < 0:
        new_dot = 0.0
    dtheta = new_dot * dt
    creep = state.creep
    if fn > 0 and dtheta != 0.0:
        creep += creep_rate(fn, ft, true_params) * abs(dtheta)
        if creep > drop_distance(object):
            slipped = True
    return SliderState(state.theta + dtheta, float(new_dot), slipped, creep, abs(float(tf)), ft)


def gripper_rates(orientations, axis_local, dt):
    """Angular rate and acceleration of the gripper about the pivot axis."""
    n = len(orientations)
    w = np.zeros(n)
    for k in range(n - 1):
        a = orientations[k] @ axis_local
        w[k + 1] = angular_rate_about(orientations[k], orientations[k + 1], a, dt)
    wd = np.zeros(n)
    wd[1:] = np.diff(w) / dt
    return w, wd


def simulate_pivot(inp):
    """Open-loop rollout for a given force trace."""
    R = np.asarray(inp.gripper_orientation_trace, dtype=float)
    fn = np.asarray(inp.fn_trace, dtype=float)
    if len(R) != len(fn):
        raise ValueError("orientation and force traces must share the timeline")
    geo = PivotGeometry(inp.object, inp.pivot_axis, inp.gravity)
    w, wd = gripper_rates(R, geo.axis, inp.dt)
    state = SliderState(inp.theta0)
    states = [state]
    dev = [geo.deviation(R[0], state.theta)]
    for k in range(1, len(R)):
        acc = None if inp.accel_trace is None else inp.accel_trace[k]
        state = step(state, R[k], fn[k], inp.dt, inp.object, inp.true_params, geo, w[k], wd[k], acc)
        states.append(state)
        dev.append(geo.deviation(R[k], state.theta))
    dev = np.array(dev)
    return PivotSimResult(states, dev, float(dev[-1]), bool(state.slipped_out))


def pendulum_energy(state, R_grip, geometry):
    """Kinetic + potential energy for a static gripper."""
    obj = geometry.obj
    c = geometry.cog_world(R_grip, state.theta)
    return 0.5 * obj.inertia_about_pivot * state.theta_dot ** 2 - obj.mass * (c @ geometry.gravity)
