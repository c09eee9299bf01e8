"""Triangle meshes, oriented points, rigid transforms and surface sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .rng import Prng
from .sphere import minimal_enclosing_sphere

NORMAL_TOL = 1e-5


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    normals: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = _frozen(self.vertices, np.float64).reshape(-1, 3)
        n = _frozen(self.normals, np.float64).reshape(-1, 3)
        t = _frozen(self.triangles, np.int64).reshape(-1, 3)
        if len(n) != len(v):
            raise ValueError(f"{len(n)} normals for {len(v)} vertices")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if len(n):
            lengths = np.linalg.norm(n, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise ValueError("vertex normals must have unit length")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "triangles", t)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(T, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    def face_areas(self) -> np.ndarray:
        c = self.corners()
        return triangle_areas(c[:, 0], c[:, 1], c[:, 2])

    def face_normals(self) -> np.ndarray:
        c = self.corners()
        return _unit_face_normals(c)


@dataclass(frozen=True, eq=False)
class OrientedPoint:
    position: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = _frozen(self.position, np.float64).reshape(3)
        n = _frozen(self.normal, np.float64).reshape(3)
        if abs(float(np.linalg.norm(n)) - 1.0) > NORMAL_TOL:
            raise ValueError("spin normal must have unit length")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Surface samples: position, unit face normal and source object id per row."""

    positions: np.ndarray
    normals: np.ndarray
    object_ids: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(self.positions, np.float64).reshape(-1, 3))
        object.__setattr__(self, "normals", _frozen(self.normals, np.float64).reshape(-1, 3))
        object.__setattr__(self, "object_ids", _frozen(self.object_ids, np.int64).reshape(-1))

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (unit quaternion, scalar first) followed by a translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(q))
        if norm == 0.0:
            raise ValueError("zero quaternion")
        if abs(norm - 1.0) > 1e-6:
            q = q / norm
        object.__setattr__(self, "rotation", _frozen(q, np.float64))
        object.__setattr__(self, "translation", _frozen(self.translation, np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def random(cls, rng: Prng, low: float = 0.0, high: float = 0.0) -> "RigidTransform":
        """Uniformly random orientation, translation uniform in [low, high]^3."""
        xyzw = Rotation.random(random_state=rng.generator).as_quat()
        t = rng.uniform(low, high, size=3)
        return cls(np.roll(xyzw, 1), t)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        q = np.concatenate([[math.cos(half)], math.sin(half) * axis])
        return cls(q, translation)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.rotation == [1.0, 0.0, 0.0, 0.0]) and not self.translation.any())

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    def apply_points(self, p: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return np.array(p, dtype=np.float64)
        return np.asarray(p, dtype=np.float64) @ self.matrix().T + self.translation

    def apply_vectors(self, v: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return np.array(v, dtype=np.float64)
        return np.asarray(v, dtype=np.float64) @ self.matrix().T

    def inverse(self) -> "RigidTransform":
        w, x, y, z = self.rotation
        q_inv = np.array([w, -x, -y, -z])
        t_inv = -(self.matrix().T @ self.translation)
        return RigidTransform(q_inv, t_inv)

    def to_json(self) -> dict:
        return {"rotation": [float(c) for c in self.rotation],
                "translation": [float(c) for c in self.translation]}


def triangle_area(a, b, c) -> float:
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (a, b, c))
    return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))


def triangle_areas(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def _unit_face_normals(corners: np.ndarray) -> np.ndarray:
    cr = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    length = np.linalg.norm(cr, axis=1, keepdims=True)
    return np.divide(cr, length, out=np.zeros_like(cr), where=length > 0)


def area_weighted_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Per-vertex normals as the normalized sum of incident face normals weighted by area."""
    corners = vertices[triangles]
    # The raw cross product has length 2*area, which is exactly the weighting wanted.
    cr = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    acc = np.zeros_like(vertices, dtype=np.float64)
    for k in range(3):
        np.add.at(acc, triangles[:, k], cr)
    length = np.linalg.norm(acc, axis=1)
    bad = length <= 1e-300
    if np.any(bad):
        # Incident faces cancel out; fall back to the first incident face normal.
        face_n = _unit_face_normals(corners)
        for vi in np.flatnonzero(bad):
            ti, _ = np.nonzero(triangles == vi)
            if len(ti):
                acc[vi] = face_n[ti[0]]
            else:
                acc[vi] = (0.0, 0.0, 1.0)
        length = np.linalg.norm(acc, axis=1)
    return acc / length[:, None]


def normalize_to_unit_sphere(mesh: TriangleMesh) -> tuple[TriangleMesh, float, np.ndarray]:
    """Translate and scale ``mesh`` so its minimal enclosing sphere is the unit sphere.

    Returns ``(normalized_mesh, scale, center)``; the normalized mesh equals
    ``(mesh.vertices - center) / scale``.
    """
    if mesh.vertex_count == 0:
        raise ValueError("empty mesh")
    center, radius = minimal_enclosing_sphere(mesh.vertices)
    if not radius > 0.0:
        raise ValueError("all vertices coincide; cannot normalize a zero-radius mesh")
    verts = (mesh.vertices - center) / radius
    return TriangleMesh(verts, mesh.normals, mesh.triangles), float(radius), center


def apply_transform(mesh: TriangleMesh, t: RigidTransform) -> TriangleMesh:
    return TriangleMesh(t.apply_points(mesh.vertices), t.apply_vectors(mesh.normals), mesh.triangles)


def transform_oriented_point(p: OrientedPoint, t: RigidTransform) -> OrientedPoint:
    return OrientedPoint(t.apply_points(p.position[None])[0], t.apply_vectors(p.normal[None])[0])


def concatenate(meshes: list[TriangleMesh]) -> TriangleMesh:
    """Merge meshes into one, offsetting triangle indices."""
    if not meshes:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    offsets = np.cumsum([0] + [m.vertex_count for m in meshes[:-1]])
    return TriangleMesh(
        np.concatenate([m.vertices for m in meshes]),
        np.concatenate([m.normals for m in meshes]),
        np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)]),
    )


def scene_triangles(scene) -> np.ndarray:
    """(T, 3, 3) corner array for a mesh, a list of meshes, or a list of (mesh, id) pairs."""
    if isinstance(scene, TriangleMesh):
        return scene.corners()
    parts = []
    for item in scene:
        m = item[0] if isinstance(item, tuple) else item
        parts.append(m.corners())
    if not parts:
        return np.zeros((0, 3, 3))
    return np.concatenate(parts)


def sample_point_cloud(scene, total_samples: int, rng: Prng, mode: str = "areaWeighted") -> PointCloud:
    """Draw oriented surface samples from ``scene``, a list of ``(mesh, object_id)``.

    ``areaWeighted`` picks triangles with probability proportional to area;
    ``perTriangle`` places ``ceil(total_samples / T)`` samples on every
    non-degenerate triangle. Each sample carries its triangle's face normal.
    """
    if total_samples < 1:
        raise ValueError("total_samples must be >= 1")
    corners, ids = [], []
    for mesh, oid in scene:
        corners.append(mesh.corners())
        ids.append(np.full(mesh.triangle_count, oid, dtype=np.int64))
    if not corners or sum(len(c) for c in corners) == 0:
        raise ValueError("scene has no triangles")
    corners = np.concatenate(corners)
    ids = np.concatenate(ids)
    areas = triangle_areas(corners[:, 0], corners[:, 1], corners[:, 2])
    keep = areas > 0.0
    corners, ids, areas = corners[keep], ids[keep], areas[keep]
    total_area = float(areas.sum())
    if not total_area > 0.0:
        raise ValueError("scene has zero surface area")

    if mode == "areaWeighted":
        cum = np.cumsum(areas)
        pick = np.searchsorted(cum, rng.random(total_samples) * cum[-1], side="right")
        tri = np.minimum(pick, len(areas) - 1)
    elif mode == "perTriangle":
        per = -(-total_samples // len(areas))
        tri = np.repeat(np.arange(len(areas)), per)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")

    n = len(tri)
    su = np.sqrt(rng.random(n))
    v = rng.random(n)
    a, b, c = corners[tri, 0], corners[tri, 1], corners[tri, 2]
    pos = (1.0 - su)[:, None] * a + (su * (1.0 - v))[:, None] * b + (su * v)[:, None] * c
    normals = _unit_face_normals(corners)[tri]
    return PointCloud(pos, normals, ids[tri])
