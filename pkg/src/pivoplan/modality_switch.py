"""Turn a planned trajectory into grasp-modality switch events and replay
them during execution.

The virtual pivot joint moves only when the object has to rotate in the
fingers, so its speed decides the modality: below the threshold the grasp
controller avoids slip, otherwise it lets the object pivot.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

SA = "SA"
GP = "GP"
DEFAULT_THRESHOLD = 0.01


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    command: str

    def __post_init__(self):
        if self.command not in (SA, GP):
            raise ValueError(f"unknown command {self.command!r}")


@dataclass
class SwitchSchedule:
    events: list
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        for a, b in zip(self.events, self.events[1:]):
            if not b.time > a.time:
                raise ValueError("event times must be strictly increasing")
            if a.command == b.command:
                raise ValueError("consecutive events must alternate")

    def command_at(self, t):
        """Modality active at time ``t`` (the first event covers earlier times)."""
        cmd = self.events[0].command if self.events else SA
        for e in self.events:
            if e.time <= t:
                cmd = e.command
            else:
                break
        return cmd

    def gp_intervals(self, end_time):
        """(start, end) pairs during which GP is active."""
        out = []
        for i, e in enumerate(self.events):
            if e.command == GP:
                end = self.events[i + 1].time if i + 1 < len(self.events) else end_time
                out.append((e.time, end))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "command"])
            for e in self.events:
                w.writerow([f"{e.time:.6f}", e.command])

    @classmethod
    def from_csv(cls, path, threshold=DEFAULT_THRESHOLD):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([SwitchEvent(float(r["time"]), r["command"]) for r in rows], threshold)


def virtual_joint_velocity(times, angles):
    """Central differences inside, one-sided at both ends."""
    angles = np.asarray(angles, dtype=float)
    if len(angles) < 2:
        return np.zeros(len(angles))
    return np.gradient(angles, np.asarray(times, dtype=float))


def required_modalities(velocity, threshold=DEFAULT_THRESHOLD, hysteresis=None):
    """Per-sample GP requirement (boolean array).

    ``hysteresis=(enter, exit)`` switches to GP when |v| >= enter and back to
    SA only once |v| < exit.
    """
    speed = np.abs(np.asarray(velocity, dtype=float))
    if hysteresis is None:
        return speed >= threshold
    enter, leave = hysteresis
    if not leave <= enter:
        raise ValueError("hysteresis exit threshold must not exceed the entry threshold")
    out = np.zeros(len(speed), dtype=bool)
    gp = False
    for i, s in enumerate(speed):
        gp = s >= leave if gp else s >= enter
        out[i] = gp
    return out


def schedule_from_mask(times, mask, threshold=DEFAULT_THRESHOLD):
    events = []
    prev = None
    for t, gp in zip(times, mask):
        cmd = GP if gp else SA
        if cmd != prev:
            events.append(SwitchEvent(float(t), cmd))
            prev = cmd
    return SwitchSchedule(events, threshold)


def compute_schedule(traj, threshold=DEFAULT_THRESHOLD, hysteresis=None):
    """Switch schedule for a trajectory with a virtual joint.

    With ``hysteresis`` given, regions shorter than two timesteps are merged
    into their predecessor as well, so no command is ever held for less than
    two samples.
    """
    angles = traj.virtual_joint
    if angles is None:
        raise ValueError("trajectory has no virtual joint")
    times = np.asarray(traj.times, dtype=float)
    if len(times) == 0:
        return SwitchSchedule([], threshold)
    v = virtual_joint_velocity(times, angles)
    mask = required_modalities(v, threshold, hysteresis)
    if hysteresis is not None:
        mask = _merge_short_regions(mask, 2)
    return schedule_from_mask(times, mask, threshold)


def _merge_short_regions(mask, min_len):
    mask = mask.copy()
    i = 0
    n = len(mask)
    while i < n:
        j = i
        while j < n and mask[j] == mask[i]:
            j += 1
        if i > 0 and j - i < min_len and j < n:
            mask[i:j] = mask[i - 1]
        i = j
    return mask


@dataclass
class DispatchReport:
    deliveries: list = field(default_factory=list)
    completed: bool = True
    abort_reason: str = None


class Dispatcher:
    """Delivers schedule events as execution progresses.

    Progress is the trajectory time matched from observed joint states, not
    wall-clock time, so a delayed execution delays the commands with it.
    """

    def __init__(self, schedule, sink, trajectory=None):
        self.schedule = schedule
        self.sink = sink
        self.trajectory = trajectory
        self._next = 0
        self.report = DispatchReport()

    def progress_time(self, joint_state):
        """Trajectory time of the planned sample closest to ``joint_state``
        (searching forward from the last delivered event)."""
        traj = self.trajectory
        lo = 0
        if self._next > 0:
            lo = int(np.searchsorted(traj.times, self.schedule.events[self._next - 1].time))
        d = np.linalg.norm(traj.samples[lo:] - np.asarray(joint_state), axis=1)
        return float(traj.times[lo + int(np.argmin(d))])

    def tick(self, now, joint_state=None):
        """Deliver every pending event whose timestamp has been reached."""
        t = now if joint_state is None or self.trajectory is None else min(now, self.progress_time(joint_state))
        events = self.schedule.events
        while self._next < len(events) and events[self._next].time <= t + 1e-12:
            e = events[self._next]
            self.sink(e.command)
            self.report.deliveries.append((e, now))
            self._next += 1

    def abort(self, reason):
        self.report.completed = False
        self.report.abort_reason = reason
        return self.report


def dispatch(schedule, clock, sink, trajectory=None, joint_states=None, abort_at=None):
    """Replay ``schedule`` against the time samples produced by ``clock``.

    ``clock`` is an iterable of monotone execution times; ``joint_states``
    (same length) optionally provides observed configurations. Returns a
    :class:`DispatchReport`; stops early when ``abort_at`` is reached.
    """
    if not schedule.events:
        sink(SA)
        return DispatchReport([(SwitchEvent(0.0, SA), 0.0)])
    d = Dispatcher(schedule, sink, trajectory)
    states = iter(joint_states) if joint_states is not None else None
    for now in clock:
        if abort_at is not None and now >= abort_at:
            return d.abort(f"execution aborted at t={now:.3f}s")
        js = next(states) if states is not None else None
        d.tick(now, js)
    return d.report
