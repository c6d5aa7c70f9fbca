"""Kinematic chain of the mobile manipulator: planar base, serial arm, and an
optional virtual pivot joint carrying the grasped object.

Frames are 4x4 homogeneous matrices. Jacobians stack linear rows over
angular rows (6 x N), both expressed in the world frame.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .transforms import axis_angle_matrix, pose

TRANSLATIONAL = "translational"
ROTATIONAL = "rotational"
CONTINUOUS = "continuous-rotational"
JOINT_KINDS = (TRANSLATIONAL, ROTATIONAL, CONTINUOUS)

WORLD = "world"
PIVOT_JOINT = "pivot"
OBJECT_LINK = "object"


class KinematicsError(ValueError):
    pass


@dataclass(frozen=True)
class Capsule:
    """Segment a-b swept by a sphere of ``radius`` (link frame, meters)."""

    a: tuple
    b: tuple
    radius: float

    def sample_points(self, n=3):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if n == 1 or np.allclose(a, b):
            return ((a + b) / 2.0)[None, :]
        s = np.linspace(0.0, 1.0, n)[:, None]
        return a + s * (b - a)


@dataclass(frozen=True)
class Link:
    name: str
    geometry: tuple = ()


@dataclass(frozen=True, eq=False)
class JointSpec:
    name: str
    kind: str
    axis: tuple
    origin: np.ndarray
    parent: str
    child: str
    limits: tuple = None
    velocity_limit: float = 1.0

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise KinematicsError(f"joint {self.name!r}: unknown kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise KinematicsError(f"joint {self.name!r}: axis must be a unit 3-vector")
        origin = np.asarray(self.origin, dtype=float)
        if origin.shape != (4, 4):
            raise KinematicsError(f"joint {self.name!r}: origin must be 4x4")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "axis", tuple(axis))
        if self.kind == CONTINUOUS and self.limits is not None:
            raise KinematicsError(f"joint {self.name!r}: continuous joints have no limits")
        if self.limits is not None:
            lo, hi = (float(v) for v in self.limits)
            if not lo < hi:
                raise KinematicsError(f"joint {self.name!r}: lower limit must be < upper")
            object.__setattr__(self, "limits", (lo, hi))
        if not self.velocity_limit >= 0.0:
            raise KinematicsError(f"joint {self.name!r}: velocity limit must be >= 0")

    @property
    def is_prismatic(self):
        return self.kind == TRANSLATIONAL


@dataclass(frozen=True, eq=False)
class KinematicModel:
    """Immutable joint tree. ``joints`` are ordered so parents precede children."""

    joints: tuple
    links: tuple
    tool_link: str = "tool"
    closing_axis: tuple = (0.0, -1.0, 0.0)
    pivot_joint_index: int = None
    object_cog_offset: tuple = None
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        joints = tuple(self.joints)
        links = tuple(self.links)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "links", links)
        link_names = {link.name for link in links}
        if len(link_names) != len(links):
            raise KinematicsError("duplicate link names")
        known = {WORLD}
        parent_joint = {}
        for i, j in enumerate(joints):
            if j.parent not in known:
                raise KinematicsError(f"joint {j.name!r}: parent {j.parent!r} does not precede it")
            if j.child in known:
                raise KinematicsError(f"joint {j.name!r}: link {j.child!r} already has a parent")
            if j.child not in link_names:
                raise KinematicsError(f"joint {j.name!r}: child link {j.child!r} not declared")
            known.add(j.child)
            parent_joint[j.child] = i
        names = [j.name for j in joints]
        if len(set(names)) != len(names):
            raise KinematicsError("duplicate joint names")
        if self.pivot_joint_index is not None:
            if self.object_cog_offset is None or np.linalg.norm(self.object_cog_offset) <= 1e-6:
                raise KinematicsError("a pivot joint needs a nonzero object CoG offset")
        n = len(joints)
        # parent joint index of each joint (-1 = world) and ancestor masks per link
        jparent = np.array([parent_joint.get(j.parent, -1) for j in joints], dtype=int)
        ancestors = {WORLD: np.zeros(n, dtype=bool)}
        for i, j in enumerate(joints):
            mask = ancestors[j.parent].copy()
            mask[i] = True
            ancestors[j.child] = mask
        index = {
            "joint": {name: i for i, name in enumerate(names)},
            "link_joint": parent_joint,
            "jparent": jparent,
            "ancestors": ancestors,
            "link": {link.name: link for link in links},
            "prismatic": np.array([j.is_prismatic for j in joints], dtype=bool),
            "axes": np.array([j.axis for j in joints]),
        }
        object.__setattr__(self, "_index", index)

    @property
    def dof(self):
        return len(self.joints)

    @property
    def joint_names(self):
        return [j.name for j in self.joints]

    @property
    def link_names(self):
        return [link.name for link in self.links]

    def joint_index(self, name):
        try:
            return self._index["joint"][name]
        except KeyError:
            raise KinematicsError(f"unknown joint {name!r}") from None

    def link(self, name):
        try:
            return self._index["link"][name]
        except KeyError:
            raise KinematicsError(f"unknown link {name!r}") from None

    def ancestor_mask(self, link):
        if link not in self._index["ancestors"]:
            raise KinematicsError(f"unknown link {link!r}")
        return self._index["ancestors"][link]

    def parent_link(self, link):
        i = self._index["link_joint"].get(link)
        return WORLD if i is None else self.joints[i].parent

    def joint_distance(self, link_a, link_b):
        """Number of joints on the tree path between two links."""
        ma, mb = self.ancestor_mask(link_a), self.ancestor_mask(link_b)
        return int(np.count_nonzero(ma ^ mb))

    @property
    def pivot_joint(self):
        if self.pivot_joint_index is None:
            return None
        return self.joints[self.pivot_joint_index]

    def lower_limits(self):
        return np.array([j.limits[0] if j.limits else -np.inf for j in self.joints])

    def upper_limits(self):
        return np.array([j.limits[1] if j.limits else np.inf for j in self.joints])

    def velocity_limits(self):
        return np.array([j.velocity_limit for j in self.joints])

    def clamp(self, q):
        return np.clip(np.asarray(q, dtype=float), self.lower_limits(), self.upper_limits())

    def check_configuration(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise KinematicsError(f"configuration has {q.shape} entries, model has {self.dof} joints")
        return q

    def evaluate(self, q):
        return KinematicState(self, self.check_configuration(q))


class KinematicState:
    """All joint and link frames of a model at one configuration."""

    def __init__(self, model, q):
        self.model = model
        self.q = q
        n = model.dof
        idx = model._index
        joint_frames = np.empty((n, 4, 4))
        child_frames = np.empty((n, 4, 4))
        eye = np.eye(4)
        for i, j in enumerate(model.joints):
            p = idx["jparent"][i]
            parent = eye if p < 0 else child_frames[p]
            Tj = parent @ j.origin
            joint_frames[i] = Tj
            motion = np.eye(4)
            if j.kind == TRANSLATIONAL:
                motion[:3, 3] = np.asarray(j.axis) * q[i]
            else:
                motion[:3, :3] = axis_angle_matrix(j.axis, q[i])
            child_frames[i] = Tj @ motion
        self.joint_frames = joint_frames
        self.child_frames = child_frames
        self.axes = np.einsum("nij,nj->ni", joint_frames[:, :3, :3], idx["axes"])
        self.origins = joint_frames[:, :3, 3].copy()

    def frame(self, link):
        if link == WORLD:
            return np.eye(4)
        i = self.model._index["link_joint"].get(link)
        if i is None:
            raise KinematicsError(f"unknown link {link!r}")
        return self.child_frames[i]

    def point_jacobians(self, masks, points):
        """Linear Jacobians (k x 3 x N) of world points moving with links.

        ``masks`` is a (k x N) boolean array of ancestor joints per point.
        """
        prismatic = self.model._index["prismatic"]
        points = np.atleast_2d(points)
        r = points[:, None, :] - self.origins[None, :, :]
        J = np.cross(self.axes[None, :, :], r)
        J[:, prismatic, :] = self.axes[prismatic][None, :, :]
        J *= masks[:, :, None]
        return np.transpose(J, (0, 2, 1))

    def angular_jacobian(self, link):
        mask = self.model.ancestor_mask(link)
        Jw = np.where(self.model._index["prismatic"][:, None], 0.0, self.axes)
        return (Jw * mask[:, None]).T

    def jacobian(self, link, point_local=(0.0, 0.0, 0.0)):
        T = self.frame(link)
        p = T[:3, :3] @ np.asarray(point_local, dtype=float) + T[:3, 3]
        mask = self.model.ancestor_mask(link)
        Jv = self.point_jacobians(mask[None, :], p[None, :])[0]
        return np.vstack([Jv, self.angular_jacobian(link)])


def forward_kinematics(model, q, link):
    """World transform of ``link`` at configuration ``q``."""
    q = model.check_configuration(q)
    model.ancestor_mask(link)
    return model.evaluate(q).frame(link)


def jacobian(model, q, link, point=(0.0, 0.0, 0.0)):
    """6 x N spatial Jacobian of a point fixed in ``link`` (point in link coordinates)."""
    q = model.check_configuration(q)
    model.ancestor_mask(link)
    return model.evaluate(q).jacobian(link, point)


def attach_pivot(model, grasp_frame, cog_offset, object_geometry=(), velocity_limit=2.0):
    """Add the virtual continuous joint between fingertips and grasped object.

    ``grasp_frame`` is the fingertip-midpoint frame relative to the tool link;
    the joint axis is the gripper closing axis expressed in that frame, and the
    child ``object`` link carries the object geometry and CoG offset.
    """
    if model.pivot_joint_index is not None:
        raise KinematicsError("pivot joint already attached")
    cog = np.asarray(cog_offset, dtype=float)
    if cog.shape != (3,) or np.linalg.norm(cog) <= 1e-6:
        raise KinematicsError("CoG offset must be nonzero: grasping at the CoG makes pivoting impossible")
    grasp_frame = np.asarray(grasp_frame, dtype=float)
    closing = grasp_frame[:3, :3].T @ np.asarray(model.closing_axis, dtype=float)
    closing /= np.linalg.norm(closing)
    joint = JointSpec(
        name=PIVOT_JOINT,
        kind=CONTINUOUS,
        axis=tuple(closing),
        origin=grasp_frame,
        parent=model.tool_link,
        child=OBJECT_LINK,
        limits=None,
        velocity_limit=velocity_limit,
    )
    return replace(
        model,
        joints=model.joints + (joint,),
        links=model.links + (Link(OBJECT_LINK, tuple(object_geometry)),),
        pivot_joint_index=model.dof,
        object_cog_offset=tuple(cog),
        _index=None,
    )


def object_capsule(half_extents, cog_offset):
    """Capsule along the object's vertical axis approximating a box centered on the CoG."""
    hx, hy, hz = (float(v) for v in half_extents)
    r = float(np.hypot(hx, hy))
    c = np.asarray(cog_offset, dtype=float)
    h = max(hz - r, 0.0)
    return Capsule(tuple(c - [0, 0, h]), tuple(c + [0, 0, h]), r)


# Default robot: omnidirectional base (x, y, yaw) carrying a 6R arm with
# UR5-like link lengths and a spherical wrist; tool z is the approach axis.
DEFAULT_ROBOT = {
    "mount": {"xyz": [0.12, 0.0, 0.49], "rpy": [0.0, 0.0, 0.0]},
    "base_geometry": [
        {"a": [-0.18, -0.22, 0.22], "b": [-0.18, 0.22, 0.22], "radius": 0.22},
        {"a": [0.12, -0.22, 0.22], "b": [0.12, 0.22, 0.22], "radius": 0.22},
    ],
    "base_velocity": [0.5, 0.5, 0.8],
    "arm": [
        {"name": "shoulder_pan", "axis": [0, 0, 1], "xyz": [0, 0, 0.089],
         "limits": [-3.14, 3.14], "velocity_limit": 1.0,
         "geometry": [{"a": [0, 0, -0.05], "b": [0, 0, 0.05], "radius": 0.06}]},
        {"name": "shoulder_lift", "axis": [0, 1, 0], "xyz": [0, 0, 0],
         "limits": [-2.6, 2.6], "velocity_limit": 1.0,
         "geometry": [{"a": [0, 0, 0.0], "b": [0, 0, 0.425], "radius": 0.055}]},
        {"name": "elbow", "axis": [0, 1, 0], "xyz": [0, 0, 0.425],
         "limits": [-2.8, 2.8], "velocity_limit": 1.0,
         "geometry": [{"a": [0, 0, 0.0], "b": [0, 0, 0.392], "radius": 0.045}]},
        {"name": "wrist_roll", "axis": [0, 0, 1], "xyz": [0, 0, 0.392],
         "limits": [-3.14, 3.14], "velocity_limit": 1.0, "geometry": []},
        {"name": "wrist_pitch", "axis": [0, 1, 0], "xyz": [0, 0, 0],
         "limits": [-2.6, 2.6], "velocity_limit": 1.0,
         "geometry": [{"a": [0, 0, 0.0], "b": [0, 0, 0.09], "radius": 0.045}]},
        {"name": "tool_roll", "axis": [0, 0, 1], "xyz": [0, 0, 0.09],
         "limits": [-3.14, 3.14], "velocity_limit": 1.0,
         "geometry": [
             {"a": [-0.09, 0, 0.04], "b": [0.09, 0, 0.04], "radius": 0.05},
             {"a": [0, 0.045, 0.11], "b": [0, 0.045, 0.17], "radius": 0.012},
             {"a": [0, -0.045, 0.11], "b": [0, -0.045, 0.17], "radius": 0.012},
         ]},
    ],
    "tool_link": "tool",
    "closing_axis": [0, -1, 0],
    "grasp_frame": {"xyz": [0, 0, 0.16], "rpy": [0, 3.141592653589793, 0]},
    "home": [0.0, 0.0, 0.0, 0.0, -0.3, 2.2, 0.0, 1.24, 0.0],
}


def _capsules(specs):
    return tuple(Capsule(tuple(s["a"]), tuple(s["b"]), float(s["radius"])) for s in specs)


def build_robot(description=None):
    """Build the 9-DOF base+arm model from a robot description mapping.

    Keys missing from ``description`` fall back to :data:`DEFAULT_ROBOT`.
    """
    desc = dict(DEFAULT_ROBOT)
    if description:
        desc.update(description)
    vx, vy, vyaw = desc["base_velocity"]
    joints = [
        JointSpec("base_x", TRANSLATIONAL, (1.0, 0.0, 0.0), np.eye(4), WORLD, "base_x_link",
                  (-20.0, 20.0), vx),
        JointSpec("base_y", TRANSLATIONAL, (0.0, 1.0, 0.0), np.eye(4), "base_x_link", "base_y_link",
                  (-20.0, 20.0), vy),
        JointSpec("base_yaw", ROTATIONAL, (0.0, 0.0, 1.0), np.eye(4), "base_y_link", "base",
                  (-2 * np.pi, 2 * np.pi), vyaw),
    ]
    links = [Link("base_x_link"), Link("base_y_link"), Link("base", _capsules(desc["base_geometry"]))]
    parent = "base"
    mount = desc["mount"]
    for k, spec in enumerate(desc["arm"]):
        child = desc["tool_link"] if k == len(desc["arm"]) - 1 else spec.get("link", spec["name"] + "_link")
        origin = pose(spec.get("xyz", (0, 0, 0)), spec.get("rpy", (0, 0, 0)))
        if k == 0:
            origin = pose(mount["xyz"], mount.get("rpy", (0, 0, 0))) @ origin
        axis = np.asarray(spec["axis"], dtype=float)
        joints.append(JointSpec(spec["name"], spec.get("kind", ROTATIONAL), tuple(axis / np.linalg.norm(axis)),
                                origin, parent, child,
                                tuple(spec["limits"]) if spec.get("limits") is not None else None,
                                float(spec.get("velocity_limit", 1.0))))
        links.append(Link(child, _capsules(spec.get("geometry", []))))
        parent = child
    return KinematicModel(tuple(joints), tuple(links), tool_link=desc["tool_link"],
                          closing_axis=tuple(float(v) for v in desc["closing_axis"]))


def grasp_frame_from(description=None):
    desc = dict(DEFAULT_ROBOT)
    if description:
        desc.update(description)
    g = desc["grasp_frame"]
    return pose(g["xyz"], g.get("rpy", (0, 0, 0)))


def home_configuration(description=None):
    desc = dict(DEFAULT_ROBOT)
    if description:
        desc.update(description)
    return np.asarray(desc["home"], dtype=float)
