"""Experiment harness: feasibility grids, simulated execution and reports.

Execution pipeline for one plan: switch schedule from the virtual joint
speed -> 500 Hz playback of the gripper orientation -> grasp controller fed
with the slider's contact loads -> slider step with the commanded force.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .grasp_control import (GRIPPER_PIVOTING, SLIPPING_AVOIDANCE, ContactWrench, GraspController,
                            LimitSurfaceParams)
from .modality_switch import GP, SA, Dispatcher, compute_schedule
from .planner import FREE, INFEASIBLE_GOAL, PlanRequest, PlanResult, Planner, Trajectory
from .scene import load_scene
from .slider_sim import DT, PivotGeometry, SliderState, gripper_rates, step
from .transforms import axis_angle_matrix, pose, rotation_log

log = logging.getLogger(__name__)

DEFAULT_ANGLES = (-math.pi / 2, -math.pi / 4, 0.0, math.pi / 4, math.pi / 2, FREE)
DEFAULT_DESK_HEIGHTS = (0.2, 0.72, 1.31)
DEFAULT_SHELF_HEIGHTS = (0.2, 0.6, 0.93, 1.31)
DEFAULT_SENSITIVITY = (("B", 0.25), ("B", 0.3), ("B", 0.5), ("B", 0.9), ("D", 0.85), ("D", 0.72))
PIVOT_FAILURE_DEVIATION = 0.5
RELEASE_DURATION = 0.5

OK = "ok"
PIVOT_FAILURE = "pivot_failure"
DROP = "drop"


@dataclass
class ExperimentSpec:
    kind: str
    scene_path: str
    angle_grid: tuple = DEFAULT_ANGLES
    heights: tuple = ()
    objects: tuple = ()
    mu_override: dict = field(default_factory=dict)
    seed: int = 0
    pivoting_enabled: bool = True
    threshold: float = 0.01
    out_dir: str = None

    def __post_init__(self):
        if self.kind not in ("stability", "desk", "shelf", "sensitivity"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.angle_grid:
            raise ValueError("angle grid must not be empty")


def angle_label(a):
    if a == FREE:
        return "free"
    for k, name in ((-2, "-pi/2"), (-4, "-pi/4"), (4, "pi/4"), (2, "pi/2")):
        if abs(a - math.pi / k) < 1e-9:
            return name
    return f"{a:g}"


def parse_angle(text):
    """'free', a float, or a multiple of pi such as '-pi/4' or '0.5pi'."""
    t = text.strip().lower().replace(" ", "")
    if t == "free":
        return FREE
    if "pi" in t:
        num, _, den = t.partition("/")
        coef = num.replace("pi", "").replace("*", "")
        coef = {"": 1.0, "+": 1.0, "-": -1.0}[coef] if coef in ("", "+", "-") else float(coef)
        return coef * math.pi / (float(den) if den else 1.0)
    return float(t)


@dataclass
class FeasibilityMatrix:
    label: str
    rows: list
    cols: list
    outcomes: list
    durations: list
    planning_times: list
    chosen_start: list
    chosen_goal: list
    trajectories: dict = field(default_factory=dict)  # (i, j) -> Trajectory of successful cells

    @classmethod
    def empty(cls, label, rows, cols):
        def grid(v):
            return [[v] * len(cols) for _ in rows]
        return cls(label, list(rows), list(cols), grid(None), grid(None), grid(None), grid(None), grid(None))

    def gray(self, i, j):
        """Equal fixed angles: reachable without pivoting."""
        return self.rows[i] != FREE and self.rows[i] == self.cols[j]

    def success(self, i, j):
        return self.outcomes[i][j] == "success"

    def success_mask(self):
        return np.array([[self.success(i, j) for j in range(len(self.cols))] for i in range(len(self.rows))])

    def set(self, i, j, result):
        self.outcomes[i][j] = result.outcome
        self.planning_times[i][j] = result.planning_time_s
        self.chosen_start[i][j] = result.chosen_start_angle
        self.chosen_goal[i][j] = result.chosen_goal_angle
        if result.success:
            self.durations[i][j] = result.trajectory.duration
            self.trajectories[(i, j)] = result.trajectory

    def to_csv(self, path):
        """Deterministic cell list (wall-clock planning times are left out so
        that identical runs give identical files; see :meth:`to_text`)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha_s", "alpha_g", "outcome", "trajectory_duration_s", "chosen_start", "chosen_goal",
                        "gray"])
            for i, a in enumerate(self.rows):
                for j, b in enumerate(self.cols):
                    d = self.durations[i][j]
                    cs, cg = self.chosen_start[i][j], self.chosen_goal[i][j]
                    w.writerow([angle_label(a), angle_label(b), self.outcomes[i][j],
                                "" if d is None else f"{d:.2f}",
                                "" if cs is None else f"{cs:.4f}",
                                "" if cg is None or not self.success(i, j) else f"{cg:.4f}",
                                int(self.gray(i, j))])

    def to_text(self):
        """Aligned table of planning times; '-' marks failures, free angles
        chosen by the planner are shown in parentheses."""
        width = 16
        head = "as\\ag".ljust(8) + "".join(angle_label(c).rjust(width) for c in self.cols)
        lines = [self.label, head]
        for i, a in enumerate(self.rows):
            cells = []
            for j, b in enumerate(self.cols):
                if not self.success(i, j):
                    txt = "-"
                else:
                    txt = f"{self.planning_times[i][j]:.1f}"
                    if b == FREE:
                        txt = f"({self.chosen_goal[i][j]:.2f}) " + txt
                    if a == FREE:
                        txt = f"[{self.chosen_start[i][j]:.2f}] " + txt
                    if self.gray(i, j):
                        txt = "*" + txt
                cells.append(txt.rjust(width))
            lines.append(angle_label(a).ljust(8) + "".join(cells))
        lines.append("* gray cell (equal fixed angles), (..) chosen goal angle, [..] chosen start angle")
        return "\n".join(lines)


def _grid(planner, scene, obj_name, goal, angles, pivoting, seed, via=(), label=""):
    m = FeasibilityMatrix.empty(label, angles, angles)
    plans = {}
    for i, a in enumerate(angles):
        for j, b in enumerate(angles):
            req = PlanRequest(scene, obj_name, goal, a, b, pivoting_enabled=pivoting, seed=seed, via_poses=via)
            res = planner.plan(req)
            m.set(i, j, res)
            plans[(i, j)] = res
    return m, plans


def _height_tag(h):
    return f"{h:.2f}"


def desk_goal(scene, obj, height):
    sc = scene.with_support_height(scene.task.get("support", "desk"), height)
    support = sc.obstacle(sc.task.get("support", "desk"))
    goal = obj.placement(sc.task["place_xy"], sc.task.get("place_yaw", 0.0), support.top,
                         sc.task.get("clearance", 0.02))
    return sc, goal


def shelf_goal(scene, obj, height):
    support = scene.support_at(height)
    goal = obj.placement(scene.task["place_xy"], scene.task.get("place_yaw", 0.0), support.top,
                         scene.task.get("clearance", 0.02))
    via = ()
    off = scene.task.get("approach_offset")
    if off is not None:
        v = goal.copy()
        v[:3, 3] += np.asarray(off, dtype=float)
        via = (v,)
    return goal, via


def run_desk(spec, write=True):
    """One feasibility matrix per desk height."""
    scene = load_scene(spec.scene_path)
    obj_name = (spec.objects or (scene.task.get("object", "E"),))[0]
    heights = spec.heights or DEFAULT_DESK_HEIGHTS
    out = {}
    for h in heights:
        sc, goal = desk_goal(scene, scene.object(obj_name), h)
        planner = Planner(sc, obj_name)
        m, _ = _grid(planner, sc, obj_name, goal, list(spec.angle_grid), spec.pivoting_enabled, spec.seed,
                     label=f"desk {h:.2f} m, object {obj_name}" + ("" if spec.pivoting_enabled else " (no pivot)"))
        out[h] = m
        if write and spec.out_dir:
            _write_matrix(spec.out_dir, _height_tag(h), m)
    return out


def run_shelf(spec, write=True, execute_free=True):
    """One matrix per shelf layer; successful free-angle plans are executed."""
    scene = load_scene(spec.scene_path)
    obj_name = (spec.objects or (scene.task.get("object", "A"),))[0]
    heights = spec.heights or DEFAULT_SHELF_HEIGHTS
    planner = Planner(scene, obj_name)
    obj = scene.object(obj_name)
    params = controller_params(obj, spec.mu_override)
    out, executions = {}, {}
    for h in heights:
        goal, via = shelf_goal(scene, obj, h)
        m, plans = _grid(planner, scene, obj_name, goal, list(spec.angle_grid), spec.pivoting_enabled, spec.seed,
                         via, label=f"shelf {h:.2f} m, object {obj_name}" + ("" if spec.pivoting_enabled else
                                                                             " (no pivot)"))
        out[h] = m
        if write and spec.out_dir:
            _write_matrix(spec.out_dir, _height_tag(h), m)
        if not execute_free:
            continue
        for (i, j), res in sorted(plans.items()):
            a, b = m.rows[i], m.cols[j]
            if not res.success or (a != FREE and b != FREE):
                continue
            case = f"shelf_{_height_tag(h)}_{_slug(a)}_{_slug(b)}"
            ex = execute(planner, res, obj, params, obj_params(obj), threshold=spec.threshold)
            executions[case] = ex
            if write and spec.out_dir:
                write_execution(spec.out_dir, case, ex)
    return out, executions


def _slug(a):
    return angle_label(a).replace("/", "_").replace("-", "m")


def _write_matrix(out_dir, tag, m):
    os.makedirs(out_dir, exist_ok=True)
    m.to_csv(os.path.join(out_dir, f"matrix_{tag}.csv"))
    with open(os.path.join(out_dir, f"matrix_{tag}.txt"), "w") as fh:
        fh.write(m.to_text() + "\n")


# ---------------------------------------------------------------- execution

def obj_params(obj, base=None):
    """Ground-truth contact parameters of an object."""
    base = base or LimitSurfaceParams(obj.mu)
    return base.with_mu(obj.mu)


def controller_params(obj, mu_override=None, base=None):
    mu = (mu_override or {}).get(obj.name, obj.mu)
    return obj_params(obj, base).with_mu(mu)


@dataclass
class ExecutionTrace:
    times: np.ndarray
    fn_SA: np.ndarray
    fn_GP: np.ndarray
    fn_cmd: np.ndarray
    gp_active: np.ndarray
    v_j: np.ndarray
    theta: np.ndarray
    deviation: np.ndarray
    ft: np.ndarray
    tau: np.ndarray
    schedule: object
    slipped_out: bool
    slip_time: float
    final_deviation: float
    max_deviation: float
    outcome: str
    release_time: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "fn_cmd", "fn_SA", "fn_GP", "modality", "v_j", "theta", "deviation", "ft_load",
                        "tau_load"])
            for k in range(len(self.times)):
                w.writerow([f"{self.times[k]:.3f}", f"{self.fn_cmd[k]:.5f}", f"{self.fn_SA[k]:.5f}",
                            f"{self.fn_GP[k]:.5f}", GP if self.gp_active[k] else SA, f"{self.v_j[k]:.5f}",
                            f"{self.theta[k]:.6f}", f"{self.deviation[k]:.6f}", f"{self.ft[k]:.5f}",
                            f"{self.tau[k]:.6f}"])


def classify(slipped_out, final_deviation):
    if slipped_out:
        return DROP
    if final_deviation > PIVOT_FAILURE_DEVIATION:
        return PIVOT_FAILURE
    return OK


def _exp_rot(rvec):
    ang = float(np.linalg.norm(rvec))
    if ang < 1e-15:
        return np.eye(3)
    return axis_angle_matrix(rvec / ang, ang)


def gripper_orientations(planner, traj):
    """World orientation of the grasp frame (pivot parent) at every sample."""
    model = planner.model
    pj = model.pivot_joint_index
    Rg = model.joints[pj].origin[:3, :3]
    return np.array([model.evaluate(q).frame(model.tool_link)[:3, :3] @ Rg for q in traj.samples])


def resample(times, R, Q, dt=DT):
    """Geodesic interpolation of orientations and linear interpolation of
    joint values onto a ``dt`` grid."""
    t_exec = np.arange(0.0, times[-1] + 0.5 * dt, dt)
    Rs = np.empty((len(t_exec), 3, 3))
    Qs = np.empty((len(t_exec), Q.shape[1]))
    seg = np.clip(np.searchsorted(times, t_exec, side="right") - 1, 0, len(times) - 2) if len(times) > 1 else \
        np.zeros(len(t_exec), dtype=int)
    rel = [rotation_log(R[k].T @ R[k + 1]) for k in range(len(times) - 1)]
    for n, (t, k) in enumerate(zip(t_exec, seg)):
        if len(times) == 1:
            Rs[n], Qs[n] = R[0], Q[0]
            continue
        s = (t - times[k]) / (times[k + 1] - times[k])
        s = min(max(s, 0.0), 1.0)
        Rs[n] = R[k] @ _exp_rot(rel[k] * s)
        Qs[n] = Q[k] + s * (Q[k + 1] - Q[k])
    return t_exec, Rs, Qs


def run_pivot_execution(obj, axis_local, gravity, t_exec, R_exec, theta0, ctrl_params, true_params, schedule,
                        q_exec=None, traj=None, v_exec=None, noise=None, rng=None, accel=None,
                        release_duration=RELEASE_DURATION):
    """Closed-loop rollout: controller <-> slider, modality from the schedule."""
    geo = PivotGeometry(obj, axis_local, gravity)
    w, wd = gripper_rates(R_exec, geo.axis, DT)
    ctrl = GraspController(ctrl_params)
    modality = {SA: SLIPPING_AVOIDANCE, GP: GRIPPER_PIVOTING}
    dispatcher = Dispatcher(schedule, lambda c: ctrl.set_modality(modality[c]), traj)
    tg, ft0, _ = geo.loads(R_exec[0], theta0, None if accel is None else accel[0])
    state = SliderState(theta0, 0.0, False, 0.0, abs(tg), ft0)
    n = len(t_exec)
    n_rel = int(round(release_duration / DT))
    total = n + n_rel
    rec = {k: np.zeros(total) for k in ("fn_SA", "fn_GP", "fn_cmd", "theta", "dev", "ft", "tau", "v")}
    gp = np.zeros(total, dtype=bool)
    slip_time = None
    for k in range(total):
        t = k * DT
        if k < n:
            dispatcher.tick(t_exec[k], None if q_exec is None else q_exec[k])
            nf, nt = (0.0, 0.0)
            if noise is not None:
                nf = rng.uniform(-noise[0], noise[0])
                nt = rng.uniform(-noise[1], noise[1])
            if state.slipped_out:
                ft_m, tau_m = 0.0, 0.0
            else:
                ft_m, tau_m = max(state.ft_load + nf, 0.0), max(state.friction_torque + nt, 0.0)
            out = ctrl.update(ContactWrench(ft_m, tau_m, t))
            a = None if accel is None else accel[k]
            state = step(state, R_exec[k], out.fn_commanded, DT, obj, true_params, geo, w[k], wd[k], a,
                         (nf, nt))
            if state.slipped_out and slip_time is None:
                slip_time = t
            Rk = R_exec[k]
            rec["v"][k] = 0.0 if v_exec is None else v_exec[k]
        else:
            # object set down: the support takes over the load
            ctrl.set_modality(SLIPPING_AVOIDANCE)
            s = max(0.0, 1.0 - (k - n) * DT / 0.1)
            load = 0.0 if state.slipped_out else s
            out = ctrl.update(ContactWrench(load * state.ft_load, load * state.friction_torque, t))
            Rk = R_exec[-1]
        rec["fn_SA"][k], rec["fn_GP"][k], rec["fn_cmd"][k] = out.fn_SA, out.fn_GP, out.fn_commanded
        gp[k] = ctrl.modality == GRIPPER_PIVOTING
        rec["theta"][k] = state.theta
        rec["dev"][k] = geo.deviation(Rk, state.theta)
        rec["ft"][k] = 0.0 if state.slipped_out else state.ft_load
        rec["tau"][k] = 0.0 if state.slipped_out else state.friction_torque
    final_dev = float(rec["dev"][n - 1])
    times = np.arange(total) * DT
    return ExecutionTrace(times, rec["fn_SA"], rec["fn_GP"], rec["fn_cmd"], gp, rec["v"], rec["theta"], rec["dev"],
                          rec["ft"], rec["tau"], schedule, bool(state.slipped_out), slip_time, final_dev,
                          float(np.max(rec["dev"][:n])), classify(state.slipped_out, final_dev), float(t_exec[-1]))


def execute(planner, result, obj, ctrl_params, true_params, threshold=0.01, hysteresis=None, noise=None, seed=0):
    """Simulated execution of a successful plan."""
    if not result.success:
        raise ValueError("only successful plans can be executed")
    traj = result.trajectory
    schedule = compute_schedule(traj, threshold, hysteresis)
    R = gripper_orientations(planner, traj)
    t_exec, R_exec, Q_exec = resample(traj.times, R, traj.samples)
    pj = planner.pivot_index
    v_plan = np.gradient(traj.virtual_joint, traj.times) if len(traj.times) > 1 else np.zeros(len(traj.times))
    v_exec = np.interp(t_exec, traj.times, v_plan)
    axis = planner.model.joints[pj].axis
    rng = np.random.default_rng(seed)
    return run_pivot_execution(obj, axis, planner.scene.gravity, t_exec, R_exec, float(traj.samples[0, pj]),
                               ctrl_params, true_params, schedule, Q_exec, traj, v_exec, noise, rng)


def write_execution(out_dir, case, ex):
    os.makedirs(out_dir, exist_ok=True)
    ex.to_csv(os.path.join(out_dir, f"trace_{case}.csv"))
    ex.schedule.to_csv(os.path.join(out_dir, f"schedule_{case}.csv"))
    with open(os.path.join(out_dir, f"plot_{case}.py"), "w") as fh:
        fh.write(PLOT_TEMPLATE.format(case=case))


PLOT_TEMPLATE = '''"""Grasp force and virtual joint speed for case {case} (gray: pivoting active)."""
import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "trace_{case}.csv")) as fh:
    rows = list(csv.DictReader(fh))
with open(os.path.join(here, "schedule_{case}.csv")) as fh:
    events = list(csv.DictReader(fh))

t = [float(r["t"]) for r in rows]
end = t[-1] if t else 0.0
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
for i, e in enumerate(events):
    if e["command"] == "GP":
        stop = float(events[i + 1]["time"]) if i + 1 < len(events) else end
        for ax in (ax1, ax2):
            ax.axvspan(float(e["time"]), stop, color="0.85", lw=0)
ax1.plot(t, [float(r["fn_cmd"]) for r in rows], "k", label="f_n")
ax1.plot(t, [float(r["fn_SA"]) for r in rows], "r", lw=0.8, label="f_n SA")
ax1.plot(t, [float(r["fn_GP"]) for r in rows], color="0.45", lw=0.8, label="f_n GP")
ax1.set_ylabel("grasp force [N]")
ax1.legend(loc="upper right")
ax2.plot(t, [float(r["v_j"]) for r in rows], "k")
ax2.set_ylabel("v_j [rad/s]")
ax2.set_xlabel("time [s]")
fig.tight_layout()
fig.savefig(os.path.join(here, "plot_{case}.png"), dpi=150)
'''


# ---------------------------------------------------------------- stability

def _min_jerk(T, n):
    s = np.linspace(0.0, 1.0, n)
    pos = 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5
    acc = (60 * s - 180 * s ** 2 + 120 * s ** 3) / T ** 2
    return pos, acc


STABILITY_MOTIONS = (
    ("rot_pos", math.pi / 2, 0.0, None),
    ("rot_neg", -math.pi / 2, 0.0, None),
    ("trans_x", 0.0, 0.3, 0),
    ("trans_y", 0.0, 0.3, 1),
    ("trans_z", 0.0, 0.3, 2),
    ("rot_trans", math.pi / 4, 0.3, 0),
)


@dataclass
class StabilityReport:
    deviations: dict
    drops: dict
    mean_deviation: float
    max_deviation: float
    n_drops: int
    traces: dict = field(default_factory=dict)

    def to_text(self):
        lines = ["rollout                final deviation [rad]  dropped"]
        for k in self.deviations:
            lines.append(f"{k:<22} {self.deviations[k]:>20.4f}  {self.drops[k]}")
        lines.append(f"mean {self.mean_deviation:.4f} rad, max {self.max_deviation:.4f} rad, drops {self.n_drops}")
        return "\n".join(lines)


def stability_rollout(obj, angle, dist, axis_index, duration, seed, noise=(0.05, 0.002), true_params=None,
                      ctrl_params=None, hold=1.0, threshold=0.01, pivot_axis=(0.0, -1.0, 0.0),
                      gravity=(0.0, 0.0, -9.81)):
    """Gripper starts vertical, rotates by ``angle`` about the closing axis
    and/or translates ``dist`` along grasp-frame axis ``axis_index``
    (minimum-jerk profile), then holds still."""
    n_move = int(round(duration / DT)) + 1
    n_hold = int(round(hold / DT))
    prof, acc = _min_jerk(duration, n_move)
    prof = np.concatenate([prof, np.ones(n_hold)])
    acc = np.concatenate([acc, np.zeros(n_hold)])
    axis = np.asarray(pivot_axis, dtype=float)
    R_exec = np.array([axis_angle_matrix(axis, angle * s) for s in prof])
    accel = np.zeros((len(prof), 3))
    if axis_index is not None and dist:
        d = np.zeros(3)
        d[axis_index] = dist
        accel = np.array([R @ (d * a) for R, a in zip(R_exec, acc)])
    t_exec = np.arange(len(prof)) * DT
    # planned virtual joint keeps the object vertical: it counter-rotates
    theta_plan = -angle * prof
    traj = Trajectory(t_exec, theta_plan[:, None], ["pivot"], 0)
    schedule = compute_schedule(traj, threshold)
    v_exec = np.gradient(theta_plan, t_exec)
    true_params = true_params or obj_params(obj)
    ctrl_params = ctrl_params or true_params
    rng = np.random.default_rng(seed)
    return run_pivot_execution(obj, pivot_axis, gravity, t_exec, R_exec, 0.0, ctrl_params, true_params, schedule,
                               None, None, v_exec, noise, rng, accel)


def run_stability(spec, object_name="E", slow=6.0, fast=1.5, noise=(0.05, 0.002)):
    """Six motions at low and high speed with seeded contact noise."""
    scene = load_scene(spec.scene_path)
    obj = scene.object((spec.objects or (object_name,))[0])
    devs, drops, traces = {}, {}, {}
    k = 0
    for speed, T in (("slow", slow), ("fast", fast)):
        for name, angle, dist, ax in STABILITY_MOTIONS:
            ex = stability_rollout(obj, angle, dist, ax, T, spec.seed + k, noise, threshold=spec.threshold,
                                   gravity=scene.gravity)
            key = f"{speed}_{name}"
            devs[key] = ex.final_deviation
            drops[key] = ex.slipped_out
            traces[key] = ex
            k += 1
    vals = np.array(list(devs.values()))
    rep = StabilityReport(devs, drops, float(vals.mean()), float(vals.max()), int(sum(drops.values())), traces)
    if spec.out_dir:
        os.makedirs(spec.out_dir, exist_ok=True)
        with open(os.path.join(spec.out_dir, "stability.txt"), "w") as fh:
            fh.write(rep.to_text() + "\n")
        for key, ex in traces.items():
            write_execution(spec.out_dir, f"stability_{key}", ex)
    return rep


# ---------------------------------------------------------------- sensitivity

@dataclass
class SensitivityCase:
    object_name: str
    controller_mu: float
    true_mu: float
    outcome: str
    final_deviation: float
    slipped_out: bool
    slip_time: float
    trace: object = None


class PlanCache:
    """Free/free shelf plans per object, shared by sensitivity replays."""

    def __init__(self, scene):
        self.scene = scene
        self._planners = {}
        self._plans = {}

    def planner(self, name):
        if name not in self._planners:
            self._planners[name] = Planner(self.scene, name)
        return self._planners[name]

    def plan(self, name, height, seed=0):
        key = (name, height, seed)
        if key not in self._plans:
            obj = self.scene.object(name)
            goal, via = shelf_goal(self.scene, obj, height)
            self._plans[key] = self.planner(name).plan(
                PlanRequest(self.scene, name, goal, FREE, FREE, seed=seed, via_poses=via))
        return self._plans[key]


def sensitivity_height(scene, name):
    table = scene.task.get("sensitivity_layers", {})
    return float(table.get(name, 0.6))


def run_sensitivity(spec, cases=None, cache=None):
    """Replay shelf executions with a controller friction coefficient that
    differs from the true one."""
    scene = load_scene(spec.scene_path)
    cache = cache or PlanCache(scene)
    if cases is None:
        cases = tuple(spec.mu_override.items()) if spec.mu_override else DEFAULT_SENSITIVITY
    out = []
    for name, mu in cases:
        obj = scene.object(name)
        res = cache.plan(name, sensitivity_height(scene, name), spec.seed)
        if not res.success:
            raise RuntimeError(f"no shelf plan for object {name}: {res.outcome}")
        ex = execute(cache.planner(name), res, obj, controller_params(obj, {name: mu}), obj_params(obj),
                     threshold=spec.threshold)
        out.append(SensitivityCase(name, mu, obj.mu, ex.outcome, ex.final_deviation, ex.slipped_out, ex.slip_time,
                                   ex))
        if spec.out_dir:
            write_execution(spec.out_dir, f"sensitivity_{name}_mu{mu:g}", ex)
    if spec.out_dir:
        os.makedirs(spec.out_dir, exist_ok=True)
        with open(os.path.join(spec.out_dir, "sensitivity.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["object", "controller_mu", "true_mu", "outcome", "final_deviation", "slip_time"])
            for c in out:
                w.writerow([c.object_name, f"{c.controller_mu:g}", f"{c.true_mu:g}", c.outcome,
                            f"{c.final_deviation:.4f}", "" if c.slip_time is None else f"{c.slip_time:.3f}"])
    return out
