"""Poses, triangle meshes, and the contact-time oracle.

Observations are plain floats in seconds; ``NO_CONTACT`` (``inf``) marks a
guarded move whose swept path never touches the object.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from touchloc import _raycast

if TYPE_CHECKING:
    from touchloc.actions import Action

log = logging.getLogger(__name__)

NO_CONTACT = math.inf
MISS = math.inf


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    out = math.remainder(theta, 2.0 * math.pi)
    if out == -math.pi:
        out = math.pi
    return out


@dataclass(frozen=True)
class Pose:
    """Planar-rotation pose (x, y, z, theta), theta about world z."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def from_array(cls, arr) -> Pose:
        x, y, z, th = (float(v) for v in arr)
        return cls(x, y, z, th)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def compose(self, other: Pose) -> Pose:
        """Return ``self * other`` (apply ``other`` first)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.z + other.z,
            self.theta + other.theta,
        )

    def inverse(self) -> Pose:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.z, -self.theta)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + self.translation


class MeshFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Triangle soup in the object-local frame."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(v) == 0 or len(t) == 0:
            raise ValueError("mesh needs at least one vertex and one triangle")
        if t.min() < 0 or t.max() >= len(v):
            raise ValueError("triangle index out of range")
        if np.any(triangle_areas(v, t) <= 0.0):
            raise ValueError("degenerate (zero-area) triangle")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    def face_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def bounding_radius(self) -> float:
        """Max distance of any vertex from the local origin."""
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def merged(self, other: TriangleMesh) -> TriangleMesh:
        return TriangleMesh(
            np.vstack([self.vertices, other.vertices]),
            np.vstack([self.triangles, other.triangles + self.n_vertices]),
        )


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def load_mesh(path) -> TriangleMesh:
    """Read the ``v``/``f`` subset of Wavefront OBJ.

    Face entries may use the ``i/j/k`` form; only the vertex index is kept.
    Degenerate faces are dropped with a warning, other record types are
    skipped with a warning.
    """
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int, int]] = []  # (i, j, k, line number)
    skipped: set[str] = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise MeshFormatError(f"{path}:{lineno}: malformed vertex")
                try:
                    verts.append((float(rest[0]), float(rest[1]), float(rest[2])))
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: malformed vertex") from None
            elif tag == "f":
                if len(rest) != 3:
                    raise MeshFormatError(f"{path}:{lineno}: non-triangle face")
                try:
                    idx = [int(tok.split("/")[0]) for tok in rest]
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: malformed face") from None
                faces.append((*idx, lineno))
            else:
                skipped.add(tag)
    for i, j, k, lineno in faces:
        for n in (i, j, k):
            if n < 1 or n > len(verts):
                raise MeshFormatError(f"{path}:{lineno}: index out of range")
    if skipped:
        log.warning("%s: ignored OBJ record types %s", path, sorted(skipped))
    if not verts or not faces:
        raise MeshFormatError(f"{path}: no vertices or faces")
    v = np.array(verts, dtype=float)
    t = np.array([f[:3] for f in faces], dtype=np.int64) - 1
    ok = triangle_areas(v, t) > 0.0
    if not ok.all():
        log.warning("%s: dropped %d degenerate faces", path, int((~ok).sum()))
        t = t[ok]
    return TriangleMesh(v, t)


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for i, j, k in mesh.triangles + 1:
            fh.write(f"f {i} {j} {k}\n")


def box_mesh(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with outward (counter-clockwise) winding."""
    hx, hy, hz = (0.5 * float(s) for s in size)
    cx, cy, cz = center
    v = np.array(
        [[sx * hx + cx, sy * hy + cy, sz * hz + cz]
         for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    # vertex id = 4*ix + 2*iy + iz
    t = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return TriangleMesh(v, t)


def cylinder_mesh(radius: float, height: float, center=(0.0, 0.0, 0.0), segments: int = 24) -> TriangleMesh:
    cx, cy, cz = center
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    z0, z1 = cz - 0.5 * height, cz + 0.5 * height
    bottom = np.column_stack([ring, np.full(segments, z0)])
    top = np.column_stack([ring, np.full(segments, z1)])
    v = np.vstack([bottom, top, [[cx, cy, z0], [cx, cy, z1]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, segments + j], [i, segments + j, segments + i]]
        tris += [[cb, j, i], [ct, segments + i, segments + j]]
    return TriangleMesh(v, np.array(tris))


def drill_mesh() -> TriangleMesh:
    """Upright cylinder (r 0.04, h 0.2) on a 0.15 x 0.10 x 0.05 base, origin at bbox center."""
    base = box_mesh((0.15, 0.10, 0.05), center=(0.0, 0.0, -0.10))
    body = cylinder_mesh(0.04, 0.20, center=(0.0, 0.0, 0.025))
    return base.merged(body)


def door_mesh() -> TriangleMesh:
    """1.0 x 2.0 x 0.05 slab (thin along y) with a protruding handle on +y."""
    slab = box_mesh((1.0, 0.05, 2.0))
    handle = box_mesh((0.12, 0.06, 0.03), center=(0.35, 0.025 + 0.03, 0.0))
    return slab.merged(handle)


BUILTIN_MESHES = {"drill": drill_mesh, "drill-like": drill_mesh, "door": door_mesh, "door-like": door_mesh}


def mesh_by_name(name: str) -> TriangleMesh:
    if name in BUILTIN_MESHES:
        return BUILTIN_MESHES[name]()
    if not Path(name).is_file():
        raise FileNotFoundError(f"no built-in mesh or file named {name!r}")
    return load_mesh(name)


class GridIndex:
    """Uniform grid over the mesh bounding box; each cell lists overlapping triangles."""

    def __init__(self, mesh: TriangleMesh, cells_per_tri: float = 2.0, pad: float = 1e-6):
        lo, hi = mesh.bounds()
        lo = lo - pad
        hi = hi + pad
        extent = hi - lo
        target = max(1.0, cells_per_tri * mesh.n_triangles)
        scale = (target / np.prod(extent)) ** (1.0 / 3.0)
        dims = np.clip(np.ceil(extent * scale), 1, 64).astype(np.int64)
        cell = extent / dims
        tv = mesh.vertices[mesh.triangles]
        tlo = np.floor((tv.min(axis=1) - pad - lo) / cell).astype(np.int64)
        thi = np.floor((tv.max(axis=1) + pad - lo) / cell).astype(np.int64)
        tlo = np.clip(tlo, 0, dims - 1)
        thi = np.clip(thi, 0, dims - 1)
        buckets: list[list[int]] = [[] for _ in range(int(np.prod(dims)))]
        for k in range(mesh.n_triangles):
            for i in range(tlo[k, 0], thi[k, 0] + 1):
                for j in range(tlo[k, 1], thi[k, 1] + 1):
                    for m in range(tlo[k, 2], thi[k, 2] + 1):
                        buckets[(i * dims[1] + j) * dims[2] + m].append(k)
        self.lo = lo
        self.cell = cell
        self.dims = dims
        self.cell_start = np.concatenate([[0], np.cumsum([len(b) for b in buckets])]).astype(np.int64)
        self.cell_tris = np.array([k for b in buckets for k in b], dtype=np.int64)


@dataclass(frozen=True)
class SensorRig:
    """Contact points in the end-effector frame (+z along the approach direction)."""

    contact_points: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    def __post_init__(self):
        pts = np.array(self.contact_points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("rig needs at least one contact point")
        pts.flags.writeable = False
        object.__setattr__(self, "contact_points", pts)

    @classmethod
    def single(cls) -> SensorRig:
        return cls(np.zeros((1, 3)))

    @classmethod
    def three_finger(cls, spread: float = 0.03) -> SensorRig:
        return cls(np.array([[0.0, 0.0, 0.0], [spread, 0.0, 0.0], [-spread, 0.0, 0.0]]))


def approach_frame(direction, roll: float) -> np.ndarray:
    """Columns (x', y', z') with z' = direction, rolled by ``roll`` about it."""
    d = np.asarray(direction, dtype=float)
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, d)
    x /= np.linalg.norm(x)
    y = np.cross(d, x)
    c, s = math.cos(roll), math.sin(roll)
    return np.column_stack([c * x + s * y, -s * x + c * y, d])


def rig_origins(rig: SensorRig, action: Action) -> np.ndarray:
    """World positions of the rig contact points at the start of ``action``."""
    frame = approach_frame(action.direction, action.start.theta)
    return rig.contact_points @ frame.T + action.start.translation


class Scene:
    """A mesh, its grid index, and the sensor rig used by every guarded move."""

    def __init__(self, mesh: TriangleMesh, rig: SensorRig | None = None, use_grid: bool = True):
        self.mesh = mesh
        self.rig = rig if rig is not None else SensorRig.single()
        self.index = GridIndex(mesh) if use_grid else None

    def cast_local(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        if self.index is None:
            return _raycast.cast_brute(origins, dirs, self.mesh.vertices, self.mesh.triangles)
        g = self.index
        return _raycast.cast_grid(origins, dirs, self.mesh.vertices, self.mesh.triangles,
                                  g.lo, g.cell, g.dims, g.cell_start, g.cell_tris)

    def rig_origins(self, action: Action) -> np.ndarray:
        return rig_origins(self.rig, action)

    def ray_distances(self, action: Action, poses: np.ndarray) -> np.ndarray:
        """Unbounded distance along ``action`` to first contact, per pose (shape (N,))."""
        return self._distances([action], np.atleast_2d(poses))[0]

    def contact_times(self, action: Action, poses: np.ndarray) -> np.ndarray:
        dist = self.ray_distances(action, poses)
        return _to_times(dist, action.length, action.speed)

    def contact_table(self, actions, poses: np.ndarray) -> np.ndarray:
        """Contact times for every (action, pose) pair, shape (len(actions), N)."""
        actions = list(actions)
        if not actions:
            return np.empty((0, len(poses)))
        dist = self._distances(actions, np.atleast_2d(poses))
        lengths = np.array([a.length for a in actions])[:, None]
        speeds = np.array([a.speed for a in actions])[:, None]
        return _to_times(dist, lengths, speeds)

    def _distances(self, actions, poses: np.ndarray) -> np.ndarray:
        poses = np.asarray(poses, dtype=float)
        n, k = len(poses), len(self.rig.contact_points)
        c, s = np.cos(poses[:, 3]), np.sin(poses[:, 3])
        origins = np.empty((len(actions), n, k, 3))
        dirs = np.empty((len(actions), n, k, 3))
        for i, a in enumerate(actions):
            rel = self.rig_origins(a)[None, :, :] - poses[:, None, :3]  # (n, k, 3)
            # rotate by -theta into the object frame
            origins[i, :, :, 0] = c[:, None] * rel[..., 0] + s[:, None] * rel[..., 1]
            origins[i, :, :, 1] = -s[:, None] * rel[..., 0] + c[:, None] * rel[..., 1]
            origins[i, :, :, 2] = rel[..., 2]
            d = np.asarray(a.direction, dtype=float)
            dirs[i, :, :, 0] = (c * d[0] + s * d[1])[:, None]
            dirs[i, :, :, 1] = (-s * d[0] + c * d[1])[:, None]
            dirs[i, :, :, 2] = d[2]
        t = self.cast_local(origins.reshape(-1, 3), dirs.reshape(-1, 3))
        return t.reshape(len(actions), n, k).min(axis=2)


def _to_times(dist, length, speed):
    return np.where(dist <= length, dist / speed, NO_CONTACT)


def ray_cast(origin, direction, mesh: TriangleMesh, pose: Pose, index: GridIndex | None = None):
    """Distance from ``origin`` along ``direction`` to the posed mesh, or ``MISS``."""
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be unit length")
    inv = pose.inverse()
    lo = inv.apply(np.asarray(origin, dtype=float))[None, :]
    ld = (inv.rotation() @ d)[None, :]
    if index is None:
        t = _raycast.cast_brute(lo, ld, mesh.vertices, mesh.triangles)
    else:
        t = _raycast.cast_grid(lo, ld, mesh.vertices, mesh.triangles,
                               index.lo, index.cell, index.dims, index.cell_start, index.cell_tris)
    return float(t[0])


def ray_cast_bruteforce(origin, direction, mesh: TriangleMesh, pose: Pose) -> float:
    """Pure-numpy reference caster over every triangle (no compiled code)."""
    inv = pose.inverse()
    o = inv.apply(np.asarray(origin, dtype=float))
    d = inv.rotation() @ np.asarray(direction, dtype=float)
    tri = mesh.vertices[mesh.triangles]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) >= _raycast.DET_EPS
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = o - tri[:, 0]
    u = np.einsum("ij,ij->i", tv, p) * inv_det
    q = np.cross(tv, e1)
    v = (q @ d) * inv_det
    t = np.einsum("ij,ij->i", e2, q) * inv_det
    ok &= (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t >= _raycast.T_MIN)
    return float(t[ok].min()) if ok.any() else MISS


def contact_time(action: Action, pose: Pose, mesh: TriangleMesh, rig: SensorRig,
                 index: GridIndex | None = None) -> float:
    """First-contact time of ``action`` against ``mesh`` placed at ``pose``."""
    origins = rig_origins(rig, action)
    best = min(ray_cast(o, action.direction, mesh, pose, index) for o in origins)
    return best / action.speed if best <= action.length else NO_CONTACT
