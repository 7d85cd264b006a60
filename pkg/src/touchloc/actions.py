"""Guarded-move action sets: sphere, surface-normal, table, and axis-aligned approaches."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from touchloc.geometry import Pose, Scene, TriangleMesh, approach_frame

DEFAULT_SPEED = 0.05  # m/s
DEFAULT_FIXED_TIME = 5.0  # s
DEFAULT_SPHERE_RADIUS = 0.5
DEFAULT_INPLANE = 0.05
DEFAULT_MARGIN = 0.05
DEFAULT_TABLE_SCATTER = 0.1


@dataclass(frozen=True)
class Action:
    """Straight-line guarded move.

    ``start.theta`` is the hand roll about ``direction``; the rig's contact
    points are laid out in that rolled approach frame.
    """

    id: int
    start: Pose
    direction: tuple[float, float, float]
    length: float
    speed: float = DEFAULT_SPEED
    fixed_time: float = DEFAULT_FIXED_TIME
    kind: str = ""

    def __post_init__(self):
        d = tuple(float(v) for v in self.direction)
        if abs(math.sqrt(sum(v * v for v in d)) - 1.0) > 1e-9:
            raise ValueError("direction must be unit length")
        if not self.length > 0 or not self.speed > 0:
            raise ValueError("length and speed must be positive")
        object.__setattr__(self, "direction", d)

    @property
    def duration(self) -> float:
        return self.length / self.speed

    @property
    def cost(self) -> float:
        return action_cost(self)


def action_cost(a: Action) -> float:
    """Time to run the whole trajectory plus the fixed approach time."""
    return a.length / a.speed + a.fixed_time


class ActionSet(tuple):
    """Immutable sequence of actions whose ids are exactly 0..n-1 in order."""

    def __new__(cls, actions=()):
        self = super().__new__(cls, actions)
        for i, a in enumerate(self):
            if a.id != i:
                raise ValueError(f"action ids must be dense 0..n-1 (got {a.id} at {i})")
        return self

    @classmethod
    def renumbered(cls, actions) -> ActionSet:
        return cls(replace(a, id=i) for i, a in enumerate(actions))

    @property
    def costs(self) -> np.ndarray:
        return np.array([a.cost for a in self])

    def ids_of_kind(self, kind: str) -> list[int]:
        return [a.id for a in self if a.kind == kind]


CSV_FIELDS = ["id", "kind", "x", "y", "z", "theta", "dx", "dy", "dz", "length", "speed", "fixed_time"]


def write_actions_csv(actions, path) -> None:
    """Write to a path, or to an already open text file."""
    if hasattr(path, "write"):
        _write_actions(actions, path)
        return
    with open(path, "w", newline="") as fh:
        _write_actions(actions, fh)


def _write_actions(actions, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for a in actions:
        w.writerow([a.id, a.kind, *map(repr, (a.start.x, a.start.y, a.start.z, a.start.theta)),
                    *map(repr, a.direction), repr(a.length), repr(a.speed), repr(a.fixed_time)])


def read_actions_csv(path) -> ActionSet:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(Action(
                id=int(row["id"]),
                start=Pose(float(row["x"]), float(row["y"]), float(row["z"]), float(row["theta"])),
                direction=(float(row["dx"]), float(row["dy"]), float(row["dz"])),
                length=float(row["length"]),
                speed=float(row["speed"]),
                fixed_time=float(row["fixed_time"]),
                kind=row["kind"],
            ))
    return ActionSet(out)


def _unit(v) -> tuple[float, float, float]:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    return (float(v[0]), float(v[1]), float(v[2]))


def _placeholder(start_xyz, direction, roll, kind, speed, fixed_time, length=1.0) -> Action:
    return Action(-1, Pose(*(float(c) for c in start_xyz), roll), _unit(direction), length,
                  speed, fixed_time, kind)


def gen_sphere(center: Pose, radius: float, n: int, rng: np.random.Generator, *,
               inplane: float = DEFAULT_INPLANE, speed: float = DEFAULT_SPEED,
               fixed_time: float = DEFAULT_FIXED_TIME) -> list[Action]:
    """Starts uniform on a sphere around ``center``, each aimed at the center.

    Each start is shifted uniformly within a disk of radius ``inplane`` in the
    plane orthogonal to the motion and given a uniform random roll.
    """
    out = []
    c = center.translation
    for _ in range(n):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        d = -u
        frame = approach_frame(d, 0.0)
        r = inplane * math.sqrt(rng.random())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        shift = r * (math.cos(phi) * frame[:, 0] + math.sin(phi) * frame[:, 1])
        roll = rng.uniform(-math.pi, math.pi)
        out.append(_placeholder(c + radius * u + shift, d, roll, "sphere", speed, fixed_time, radius))
    return out


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Area-uniform surface points and their face normals, in the local frame."""
    areas = mesh.areas()
    tri = rng.choice(mesh.n_triangles, size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    v = mesh.vertices[mesh.triangles[tri]]
    pts = ((1 - r1)[:, None] * v[:, 0] + (r1 * (1 - r2))[:, None] * v[:, 1]
           + (r1 * r2)[:, None] * v[:, 2])
    return pts, mesh.face_normals()[tri]


def gen_normal(mesh: TriangleMesh, sensed: Pose, n: int, rng: np.random.Generator, *,
               rig_points: np.ndarray | None = None, speed: float = DEFAULT_SPEED,
               fixed_time: float = DEFAULT_FIXED_TIME) -> list[Action]:
    """Moves along the inward normal of a random surface point of the object at ``sensed``.

    One rig contact point, chosen at random, is aligned so its ray passes
    through the sampled point; the hand gets a random roll about the normal.
    Starts are placed on the surface here and pulled back by ``retract_starts``.
    """
    rig_points = np.zeros((1, 3)) if rig_points is None else np.asarray(rig_points, dtype=float)
    pts, normals = sample_surface(mesh, n, rng)
    R = sensed.rotation()
    out = []
    for p, nrm in zip(pts, normals):
        d = -(R @ nrm)
        roll = rng.uniform(-math.pi, math.pi)
        finger = rig_points[rng.integers(len(rig_points))]
        frame = approach_frame(_unit(d), roll)
        surface = sensed.apply(p)
        start = surface - frame @ finger
        out.append(_placeholder(start, d, roll, "normal", speed, fixed_time))
    return out


def gen_table(sensed: Pose, n: int, rng: np.random.Generator, *, scatter: float = DEFAULT_TABLE_SCATTER,
              height: float = 0.5, speed: float = DEFAULT_SPEED,
              fixed_time: float = DEFAULT_FIXED_TIME) -> list[Action]:
    """Straight-down moves from points scattered uniformly in a disk around ``sensed``."""
    out = []
    for _ in range(n):
        r = scatter * math.sqrt(rng.random())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        roll = rng.uniform(-math.pi, math.pi)
        start = (sensed.x + r * math.cos(phi), sensed.y + r * math.sin(phi), sensed.z + height)
        out.append(_placeholder(start, (0.0, 0.0, -1.0), roll, "table", speed, fixed_time))
    return out


def gen_human(sensed: Pose, *, distance: float = 0.5, speed: float = DEFAULT_SPEED,
              fixed_time: float = DEFAULT_FIXED_TIME) -> list[Action]:
    """Three axis-aligned approaches from +x, +y and +z, each aimed at the sensed center."""
    c = sensed.translation
    out = []
    for axis in np.eye(3):
        out.append(_placeholder(c + distance * axis, -axis, 0.0, "human", speed, fixed_time, distance))
    return out


def retract_starts(actions, poses: np.ndarray, bound_radius: float, rig_points: np.ndarray,
                   margin: float = DEFAULT_MARGIN) -> list[Action]:
    """Pull every start back along its direction until all rig points clear every hypothesis.

    Each hypothesis is bounded by a sphere of ``bound_radius`` around its
    origin, so the result is conservative: no rig point starts inside any
    posed object.
    """
    centers = np.asarray(poses, dtype=float)[:, :3]
    out = []
    for a in actions:
        d = np.asarray(a.direction)
        frame = approach_frame(d, a.start.theta)
        back = 0.0
        for q in rig_points @ frame.T + a.start.translation:
            # |q - s d - c|^2 = R^2  ->  s^2 - 2 s (d.(q-c)) + |q-c|^2 - R^2 = 0
            rel = q - centers
            b = rel @ d
            disc = b * b - (np.einsum("ij,ij->i", rel, rel) - bound_radius**2)
            hit = disc >= 0
            if hit.any():
                # points q - s d for s in [b - sqrt, b + sqrt] are inside; s must exceed the top end
                back = max(back, float((b[hit] + np.sqrt(disc[hit])).max()))
        back = back + margin if back > 0 else 0.0
        start = a.start.translation - back * d
        out.append(replace(a, start=Pose(*start, a.start.theta)))
    return out


def set_lengths(actions, scene: Scene, poses: np.ndarray, margin: float = DEFAULT_MARGIN,
                fallback: float = 1.0) -> list[Action]:
    """Length = farthest first-contact distance over ``poses`` plus ``margin``.

    Actions that contact no hypothesis keep ``fallback`` metres.
    """
    out = []
    for a in actions:
        dist = scene.ray_distances(a, poses)
        fin = dist[np.isfinite(dist)]
        length = float(fin.max()) + margin if len(fin) else fallback
        out.append(replace(a, length=length))
    return out


def build_action_set(scene: Scene, sensed: Pose, poses: np.ndarray, counts: dict[str, int],
                     rng: np.random.Generator, *, speed: float = DEFAULT_SPEED,
                     fixed_time: float = DEFAULT_FIXED_TIME, sphere_radius: float = DEFAULT_SPHERE_RADIUS,
                     inplane: float = DEFAULT_INPLANE, margin: float = DEFAULT_MARGIN,
                     table_scatter: float = DEFAULT_TABLE_SCATTER) -> ActionSet:
    """Generate, retract, and size the fixed action set for one experiment seed.

    Order is human, sphere, normal, table; ids follow that order.
    """
    kw = dict(speed=speed, fixed_time=fixed_time)
    raw: list[Action] = []
    raw += gen_human(sensed, **kw)[: counts.get("human", 0)]
    bound = scene.mesh.bounding_radius()
    extent = float(np.linalg.norm(poses[:, :3] - sensed.translation, axis=1).max()) + bound
    radius = max(sphere_radius, extent + margin)
    raw += gen_sphere(sensed, radius, counts.get("sphere", 0), rng, inplane=inplane, **kw)
    raw += gen_normal(scene.mesh, sensed, counts.get("normal", 0), rng,
                      rig_points=scene.rig.contact_points, **kw)
    raw += gen_table(sensed, counts.get("table", 0), rng, scatter=table_scatter, **kw)
    raw = retract_starts(raw, poses, bound, scene.rig.contact_points, margin)
    raw = set_lengths(raw, scene, poses, margin)
    return ActionSet.renumbered(raw)
