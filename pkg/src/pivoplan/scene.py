"""World model (oriented boxes), grasped-object descriptions and signed
distance queries used by the collision-avoidance constraints."""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .kinematics import OBJECT_LINK, build_robot
from .transforms import pose

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)
ACTIVATION_CUTOFF = 0.3
SELF_COLLISION_MIN_JOINTS = 3


class SceneError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BoxObstacle:
    name: str
    pose: np.ndarray
    half_extents: tuple
    ignore_links: tuple = ()

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float)
        if he.shape != (3,) or np.any(~(he > 0)):
            raise SceneError(f"obstacle {self.name!r}: half_extents must be three positive numbers")
        object.__setattr__(self, "half_extents", tuple(he))
        object.__setattr__(self, "pose", np.asarray(self.pose, dtype=float))

    @property
    def top(self):
        """Height of the highest point (boxes are assumed upright)."""
        return float(self.pose[2, 3] + abs(self.pose[:3, :3] @ self.half_extents)[2])


@dataclass(frozen=True)
class ObjectModel:
    name: str
    half_extents: tuple
    mass: float
    cog_offset: tuple
    mu: float
    inertia_about_pivot: float
    start_xy: tuple = None
    start_yaw: float = 0.0

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float)
        if he.shape != (3,) or np.any(~(he > 0)):
            raise SceneError(f"object {self.name!r}: half_extents must be three positive numbers")
        if not self.mass > 0:
            raise SceneError(f"object {self.name!r}: mass must be > 0")
        if not self.mu > 0:
            raise SceneError(f"object {self.name!r}: mu must be > 0")
        if not self.inertia_about_pivot > 0:
            raise SceneError(f"object {self.name!r}: inertia must be > 0")
        cog = np.asarray(self.cog_offset, dtype=float)
        if cog.shape != (3,):
            raise SceneError(f"object {self.name!r}: cog_offset must be a 3-vector")
        object.__setattr__(self, "half_extents", tuple(he))
        object.__setattr__(self, "cog_offset", tuple(cog))

    @property
    def pivot_distance(self):
        return float(np.linalg.norm(self.cog_offset))

    @property
    def pivotable(self):
        return self.pivot_distance > 1e-6

    def placement(self, xy, yaw, support_top, clearance=0.0):
        """World pose of the grasp frame when the object stands upright at ``xy``
        with its bottom ``clearance`` above ``support_top``."""
        bottom_to_grasp = self.half_extents[2] - self.cog_offset[2]
        z = support_top + clearance + bottom_to_grasp
        return pose((xy[0], xy[1], z), (0.0, 0.0, yaw))


@dataclass(frozen=True, eq=False)
class SceneDescription:
    obstacles: tuple
    objects: tuple
    robot: dict = field(default_factory=dict)
    gravity: tuple = DEFAULT_GRAVITY
    task: dict = field(default_factory=dict)
    source: str = None

    def __post_init__(self):
        names = [o.name for o in self.obstacles] + [o.name for o in self.objects]
        seen = set()
        for n in names:
            if n in seen:
                raise SceneError(f"duplicate entity name {n!r}")
            seen.add(n)
        g = np.asarray(self.gravity, dtype=float)
        if g.shape != (3,):
            raise SceneError("gravity must be a 3-vector")
        object.__setattr__(self, "gravity", tuple(g))

    def obstacle(self, name):
        for o in self.obstacles:
            if o.name == name:
                return o
        raise SceneError(f"no obstacle named {name!r}")

    def object(self, name):
        for o in self.objects:
            if o.name == name:
                return o
        raise SceneError(f"no object named {name!r}")

    def robot_model(self):
        return build_robot(self.robot)

    def with_support_height(self, name, height):
        """Copy of the scene with obstacle ``name`` resized to span floor..height."""
        old = self.obstacle(name)
        he = list(old.half_extents)
        he[2] = height / 2.0
        T = old.pose.copy()
        T[2, 3] = height / 2.0
        new = replace(old, pose=T, half_extents=tuple(he))
        obstacles = tuple(new if o.name == name else o for o in self.obstacles)
        return replace(self, obstacles=obstacles)

    def support_at(self, height, tol=1e-6):
        """Obstacle whose top surface is at ``height`` (shelf layers, desks)."""
        for o in self.obstacles:
            if o.name != "floor" and abs(o.top - height) < tol:
                return o
        raise SceneError(f"no support surface at height {height}")


@dataclass(frozen=True, eq=False)
class DistanceResult:
    """Signed distance between two geometries; ``normal`` points from b to a."""

    distance: float
    witness_a: np.ndarray
    witness_b: np.ndarray
    normal: np.ndarray
    name_a: str = ""
    name_b: str = ""
    link_a: str = None
    link_b: str = None
    center_a: np.ndarray = None
    center_b: np.ndarray = None


def _pose_from(entry, what):
    if entry is None:
        return np.eye(4)
    try:
        return pose(entry.get("xyz", (0, 0, 0)), entry.get("rpy", (0, 0, 0)))
    except (TypeError, ValueError, AttributeError) as exc:
        raise SceneError(f"{what}: malformed pose ({exc})") from None


def scene_from_dict(data, source=None):
    if not isinstance(data, dict):
        raise SceneError("scene file must contain a mapping at top level")
    obstacles = []
    for i, o in enumerate(data.get("obstacles") or []):
        name = o.get("name", f"obstacle[{i}]")
        try:
            obstacles.append(BoxObstacle(name, _pose_from(o.get("pose"), f"obstacle {name!r}"),
                                         tuple(o["half_extents"]), tuple(o.get("ignore_links", ()))))
        except KeyError as exc:
            raise SceneError(f"obstacle {name!r}: missing key {exc}") from None
        except TypeError as exc:
            raise SceneError(f"obstacle {name!r}: {exc}") from None
    objects = []
    for i, o in enumerate(data.get("objects") or []):
        name = o.get("name", f"object[{i}]")
        try:
            start = o.get("start") or {}
            objects.append(ObjectModel(
                name=name,
                half_extents=tuple(o["half_extents"]),
                mass=float(o["mass"]),
                cog_offset=tuple(o["cog_offset"]),
                mu=float(o["mu"]),
                inertia_about_pivot=float(o["inertia"]),
                start_xy=tuple(start["xy"]) if "xy" in start else None,
                start_yaw=float(start.get("yaw", 0.0)),
            ))
        except KeyError as exc:
            raise SceneError(f"object {name!r}: missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise SceneError(f"object {name!r}: {exc}") from None
    gravity = tuple(data.get("gravity", DEFAULT_GRAVITY))
    scene = SceneDescription(tuple(obstacles), tuple(objects), dict(data.get("robot") or {}),
                             gravity, dict(data.get("task") or {}), source)
    gnorm = np.linalg.norm(scene.gravity)
    if not data.get("gravity_override", False) and abs(gnorm - 9.81) > 0.05 * 9.81:
        raise SceneError(f"gravity norm {gnorm:.3f} is not within 5% of 9.81")
    return scene


def load_scene(path):
    """Parse and validate a YAML scene file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SceneError(f"cannot parse scene {path}: {exc}") from None
    return scene_from_dict(data, source=str(path))


def _box_signed(p_local, he):
    """Signed distance, closest surface point and outward normal for points in box frame."""
    q = np.clip(p_local, -he, he)
    d = p_local - q
    dist_out = np.linalg.norm(d, axis=-1)
    inside = dist_out < 1e-12
    # inside: nearest face
    gap = he - np.abs(p_local)
    k = np.argmin(gap, axis=-1)
    rows = np.arange(p_local.shape[0])
    face_sign = np.where(p_local[rows, k] >= 0.0, 1.0, -1.0)
    n_in = np.zeros_like(p_local)
    n_in[rows, k] = face_sign
    surf_in = p_local.copy()
    surf_in[rows, k] = face_sign * he[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        n_out = d / dist_out[:, None]
    normal = np.where(inside[:, None], n_in, n_out)
    surface = np.where(inside[:, None], surf_in, q)
    signed = np.where(inside, -gap[rows, k], dist_out)
    return signed, surface, normal


def spheres_box_distance(centers, radii, box):
    """Vectorized sphere/box signed distances; returns (distance, witness_a, witness_b, normal)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    R = box.pose[:3, :3]
    t = box.pose[:3, 3]
    he = np.asarray(box.half_extents)
    p_local = (centers - t) @ R
    signed, surface, normal = _box_signed(p_local, he)
    normal_w = normal @ R.T
    witness_b = surface @ R.T + t
    radii = np.broadcast_to(np.asarray(radii, dtype=float), signed.shape)
    witness_a = centers - normal_w * radii[:, None]
    return signed - radii, witness_a, witness_b, normal_w


def sphere_box_distance(center, radius, box):
    """Exact signed distance between a sphere and an oriented box."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    d, wa, wb, n = spheres_box_distance(np.asarray(center, dtype=float)[None, :], [radius], box)
    return DistanceResult(float(d[0]), wa[0], wb[0], n[0], "sphere", box.name)


def sphere_sphere_distance(ca, ra, cb, rb):
    ca, cb = np.asarray(ca, dtype=float), np.asarray(cb, dtype=float)
    v = ca - cb
    L = np.linalg.norm(v)
    n = v / L if L > 1e-12 else np.array([0.0, 0.0, 1.0])
    return DistanceResult(float(L - ra - rb), ca - n * ra, cb + n * rb, n)


class CollisionModel:
    """Precomputed sphere sets and candidate pairs for one model and scene.

    Each capsule is sampled as ``samples`` spheres; a capsule-level pair is
    represented by its closest sphere pair. With ``band > 0`` every sphere
    pair within ``band`` of that minimum is reported as well, so that a
    linearized constraint cannot be dodged by the witness hopping between
    spheres (the extra entries share the pair name with a ``#k`` suffix).
    """

    def __init__(self, model, scene, samples=3, cutoff=ACTIVATION_CUTOFF, include_object=True, band=0.0):
        self.model = model
        self.scene = scene
        self.cutoff = cutoff
        self.band = band
        caps = []
        for link in model.links:
            if link.name == OBJECT_LINK and not include_object:
                continue
            for ci, cap in enumerate(link.geometry):
                caps.append((link.name, ci, cap))
        self.capsules = caps
        links, centers, radii, owner = [], [], [], []
        for k, (lname, _, cap) in enumerate(caps):
            pts = cap.sample_points(samples)
            for p in pts:
                links.append(lname)
                centers.append(p)
                radii.append(cap.radius)
                owner.append(k)
        self.sphere_links = links
        self.sphere_local = np.array(centers).reshape(-1, 3)
        self.sphere_radius = np.array(radii)
        self.sphere_owner = np.array(owner, dtype=int)
        self.masks = np.array([model.ancestor_mask(l) for l in links]).reshape(len(links), model.dof)
        self.link_order = sorted(set(links), key=links.index)
        self._link_rows = {l: np.array([i for i, x in enumerate(links) if x == l]) for l in self.link_order}
        # capsule-vs-box candidates
        self.box_pairs = []
        for b, box in enumerate(scene.obstacles):
            for k, (lname, _, _) in enumerate(caps):
                if lname in box.ignore_links:
                    continue
                self.box_pairs.append((k, b))
        # capsule-vs-capsule self pairs
        self.self_pairs = []
        for i in range(len(caps)):
            for j in range(i + 1, len(caps)):
                la, lb = caps[i][0], caps[j][0]
                if la == lb:
                    continue
                if model.joint_distance(la, lb) < SELF_COLLISION_MIN_JOINTS:
                    continue
                self.self_pairs.append((i, j))
        sa, sb = [], []
        pair_of = []
        for p, (i, j) in enumerate(self.self_pairs):
            ia = np.flatnonzero(self.sphere_owner == i)
            ib = np.flatnonzero(self.sphere_owner == j)
            for x in ia:
                for y in ib:
                    sa.append(x)
                    sb.append(y)
                    pair_of.append(p)
        self._ss_a = np.array(sa, dtype=int)
        self._ss_b = np.array(sb, dtype=int)
        self._ss_pair = np.array(pair_of, dtype=int)

    def sphere_centers(self, state):
        out = np.empty_like(self.sphere_local)
        for lname, rows in self._link_rows.items():
            T = state.frame(lname)
            out[rows] = self.sphere_local[rows] @ T[:3, :3].T + T[:3, 3]
        return out

    def distances(self, state, cutoff=None, band=None):
        """All capsule-level pairs closer than ``cutoff`` (default: activation cutoff)."""
        cutoff = self.cutoff if cutoff is None else cutoff
        band = self.band if band is None else band
        centers = self.sphere_centers(state)
        results = []
        names = [f"{l}[{c}]" for (l, c, _) in self.capsules]
        for b, box in enumerate(self.scene.obstacles):
            ks = [k for (k, bb) in self.box_pairs if bb == b]
            if not ks:
                continue
            rows = np.flatnonzero(np.isin(self.sphere_owner, ks))
            d, wa, wb, n = spheres_box_distance(centers[rows], self.sphere_radius[rows], box)
            owners = self.sphere_owner[rows]
            for k in np.unique(owners[d < cutoff]):
                sel = np.flatnonzero(owners == k)
                sel = sel[np.argsort(d[sel], kind="stable")]
                for extra, m in enumerate(sel):
                    if extra and d[m] > d[sel[0]] + band:
                        break
                    s = rows[m]
                    name = names[k] if extra == 0 else f"{names[k]}#{extra}"
                    results.append(DistanceResult(float(d[m]), wa[m], wb[m], n[m], name, box.name,
                                                  self.sphere_links[s], None, centers[s], None))
        if len(self._ss_a):
            ca, cb = centers[self._ss_a], centers[self._ss_b]
            v = ca - cb
            L = np.linalg.norm(v, axis=1)
            d = L - self.sphere_radius[self._ss_a] - self.sphere_radius[self._ss_b]
            for p in np.unique(self._ss_pair[d < cutoff]):
                sel = np.flatnonzero(self._ss_pair == p)
                sel = sel[np.argsort(d[sel], kind="stable")]
                i, j = self.self_pairs[p]
                for extra, m in enumerate(sel):
                    if extra and d[m] > d[sel[0]] + band:
                        break
                    a, b = self._ss_a[m], self._ss_b[m]
                    n = v[m] / L[m] if L[m] > 1e-12 else np.array([0.0, 0.0, 1.0])
                    name = names[i] if extra == 0 else f"{names[i]}#{extra}"
                    results.append(DistanceResult(float(d[m]), ca[m] - n * self.sphere_radius[a],
                                                  cb[m] + n * self.sphere_radius[b], n, name, names[j],
                                                  self.sphere_links[a], self.sphere_links[b], ca[m], cb[m]))
        return results

    def min_distance(self, state):
        res = self.distances(state, cutoff=np.inf)
        return min((r.distance for r in res), default=np.inf)


def min_distance_robot_scene(model, q, scene, cutoff=ACTIVATION_CUTOFF):
    """Robot (and grasped object) vs scene and self distances below ``cutoff``."""
    return CollisionModel(model, scene, cutoff=cutoff).distances(model.evaluate(q))
