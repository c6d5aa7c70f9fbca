"""Grasp-force computation on an elliptical limit surface.

The contact can transmit a tangential force ``ft`` and a torsional moment
``tau`` about the contact normal as long as

    (ft / (mu fn))**2 + (tau / tau_max(fn))**2 <= 1

with ``tau_max(fn) = c0 * mu * fn * pad_k * fn**gamma`` (soft pad whose
contact radius grows as ``pad_k * fn**gamma``). Slipping avoidance asks for
the smallest normal force that contains the measured wrench; gripper
pivoting uses the same rule with the torque set to zero, which holds the
object against translation but lets it rotate about the closing axis.
"""

from dataclasses import dataclass

import numpy as np

SLIPPING_AVOIDANCE = "slipping_avoidance"
GRIPPER_PIVOTING = "gripper_pivoting"
MODALITIES = (SLIPPING_AVOIDANCE, GRIPPER_PIVOTING)

SAMPLE_RATE = 500.0


@dataclass(frozen=True)
class LimitSurfaceParams:
    mu: float
    pad_k: float = 0.004
    pad_gamma: float = 1.0 / 3.0
    torsion_c0: float = 0.6
    fn_min: float = 0.5
    fn_max: float = 20.0
    safety: float = 1.2
    k_dyn: float = 0.1

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if not self.pad_k > 0:
            raise ValueError("pad_k must be > 0")
        if not 0 < self.pad_gamma <= 1:
            raise ValueError("pad_gamma must be in (0, 1]")
        if not 0 < self.torsion_c0 <= 1:
            raise ValueError("torsion_c0 must be in (0, 1]")
        if not 0 < self.fn_min < self.fn_max:
            raise ValueError("need 0 < fn_min < fn_max")

    def with_mu(self, mu):
        return LimitSurfaceParams(mu, self.pad_k, self.pad_gamma, self.torsion_c0, self.fn_min, self.fn_max,
                                  self.safety, self.k_dyn)


@dataclass(frozen=True)
class ContactWrench:
    ft: float
    tau: float
    timestamp: float = 0.0

    def __post_init__(self):
        if self.ft < 0 or self.tau < 0:
            raise ValueError("wrench magnitudes must be nonnegative")


@dataclass(frozen=True)
class GraspForceOutput:
    fn_SA: float
    fn_GP: float
    fn_commanded: float
    active_modality: str
    saturated: bool = False


def tau_max(fn, params):
    """Torsional friction capacity at normal force ``fn``."""
    fn = np.maximum(fn, 0.0)
    return params.torsion_c0 * params.mu * fn * params.pad_k * fn ** params.pad_gamma


def ls_value(ft, tau, fn, params):
    """Left-hand side of the limit-surface inequality (<= 1 means no slip)."""
    if fn <= 0:
        return 0.0 if (ft == 0 and tau == 0) else np.inf
    return (ft / (params.mu * fn)) ** 2 + (tau / tau_max(fn, params)) ** 2


def tangential_capacity(fn, tau, params):
    """Tangential force the contact still supports while carrying ``tau``."""
    tm = tau_max(fn, params)
    if tm <= 0:
        return 0.0
    r = min(abs(tau) / tm, 1.0)
    return params.mu * fn * np.sqrt(1.0 - r * r)


def torsional_capacity(fn, ft, params):
    """Torque the contact still supports while carrying tangential ``ft``."""
    cap = params.mu * fn
    if cap <= 0:
        return 0.0
    r = min(abs(ft) / cap, 1.0)
    return tau_max(fn, params) * np.sqrt(1.0 - r * r)


def _containing_force(ft, tau, params, upper, tol=1e-5):
    """Smallest fn in [0, upper] inside the limit surface, or None if even
    ``upper`` is not enough."""
    if ft == 0 and tau == 0:
        return 0.0
    if ls_value(ft, tau, upper, params) > 1.0:
        return None
    lo, hi = 0.0, upper
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ls_value(ft, tau, mid, params) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def _required(ft, tau, params):
    f = _containing_force(ft, tau, params, params.fn_max / params.safety)
    if f is None:
        return params.fn_max, True
    return float(np.clip(params.safety * f, params.fn_min, params.fn_max)), False


def required_fn_SA(w, params):
    """Slipping-avoidance grasp force for the full measured wrench."""
    return _required(w.ft, w.tau, params)[0]


def required_fn_GP(w, params):
    """Grasp force for pivoting: translational slip only (torque ignored)."""
    return _required(w.ft, 0.0, params)[0]


def is_saturated(w, params):
    return _required(w.ft, w.tau, params)[1]


def fn_gradient(ft, tau, params):
    """(d fn_SA/d ft, d fn_SA/d tau) by implicit differentiation of the
    limit-surface boundary; zero where the force is clamped at fn_min or
    fn_max."""
    mu, g = params.mu, params.pad_gamma
    c = params.torsion_c0 * mu * params.pad_k
    f = _containing_force(ft, tau, params, params.fn_max / params.safety)
    if f is None or params.safety * f <= params.fn_min:
        return 0.0, 0.0
    G_f = -2 * ft ** 2 / (mu ** 2 * f ** 3) - (2 + 2 * g) * tau ** 2 / (c ** 2 * f ** (3 + 2 * g))
    G_ft = 2 * ft / (mu ** 2 * f ** 2)
    G_tau = 2 * tau / (c ** 2 * f ** (2 + 2 * g))
    return -params.safety * G_ft / G_f, -params.safety * G_tau / G_f


class RateKalmanFilter:
    """Constant-velocity Kalman filter for one scalar signal."""

    def __init__(self, dt=1.0 / SAMPLE_RATE, accel_psd=1.0, meas_var=2.5e-3):
        self.dt = dt
        self.F = np.array([[1.0, dt], [0.0, 1.0]])
        self.Q = accel_psd * np.array([[dt ** 3 / 3, dt ** 2 / 2], [dt ** 2 / 2, dt]])
        self.R = meas_var
        self.P0 = np.diag([meas_var, accel_psd * dt])
        self.x = None
        self.P = None

    def update(self, z):
        if self.x is None:
            self.x = np.array([z, 0.0])
            self.P = self.P0.copy()
            return 0.0
        x = self.F @ self.x
        P = self.F @ self.P @ self.F.T + self.Q
        s = P[0, 0] + self.R
        k = P[:, 0] / s
        self.x = x + k * (z - x[0])
        self.P = P - np.outer(k, P[0, :])
        return float(self.x[1])

    @property
    def rate(self):
        return 0.0 if self.x is None else float(self.x[1])


class DynamicComponent:
    """Extra grasp force for fast wrench variation: ``k_dyn`` times the
    filtered wrench rate mapped through the limit-surface gradient."""

    def __init__(self, params, dt=1.0 / SAMPLE_RATE):
        self.params = params
        self.ft_filter = RateKalmanFilter(dt)
        self.tau_filter = RateKalmanFilter(dt, accel_psd=4e-4, meas_var=1.3e-6)

    def update(self, w):
        dft = self.ft_filter.update(w.ft)
        dtau = self.tau_filter.update(w.tau)
        gft, gtau = fn_gradient(w.ft, w.tau, self.params)
        return self.params.k_dyn * abs(gft * dft + gtau * dtau)


def dynamic_component(history, params):
    """Dynamic term after feeding the whole wrench ``history`` (500 Hz)."""
    history = list(history)
    if len(history) < 2:
        raise ValueError("need at least two wrench samples")
    dyn = DynamicComponent(params)
    out = 0.0
    for w in history:
        out = dyn.update(w)
    return out


def compute_grasp_force(w, params, modality, history=None, dynamic=0.0):
    """Grasp force for wrench ``w``.

    The dynamic term is taken from ``history`` when given, otherwise the
    precomputed ``dynamic`` value is used (streaming use, see
    :class:`GraspController`).
    """
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}")
    if history is not None and len(history) >= 2:
        dynamic = dynamic_component(history, params)
    sa, saturated = _required(w.ft, w.tau, params)
    fn_SA = float(min(sa + dynamic, params.fn_max))
    fn_GP = required_fn_GP(w, params)
    cmd = fn_SA if modality == SLIPPING_AVOIDANCE else fn_GP
    return GraspForceOutput(fn_SA, fn_GP, cmd, modality, saturated or sa + dynamic > params.fn_max)


class GraspController:
    """Streaming controller: one instance per grasped object."""

    def __init__(self, params, dt=1.0 / SAMPLE_RATE):
        self.params = params
        self.modality = SLIPPING_AVOIDANCE
        self._dyn = DynamicComponent(params, dt)

    def set_modality(self, modality):
        if modality not in MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
        self.modality = modality

    def update(self, w):
        d = self._dyn.update(w)
        return compute_grasp_force(w, self.params, self.modality, dynamic=d)
