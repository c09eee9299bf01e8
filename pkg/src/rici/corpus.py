"""Procedural mesh collection for desk-scale clutterbox runs.

Generates closed, irregular shapes (bumpy blobs, superquadrics, tori, tubes
along knots, simple assemblies) so that experiments can run without an
external dataset. Everything is derived from one seed.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .loaders import write_obj
from .mesh import TriangleMesh, area_weighted_vertex_normals, concatenate
from .rng import Prng


def _weld(verts: np.ndarray, tris: np.ndarray, decimals: int = 9) -> TriangleMesh:
    """Merge coincident vertices, drop collapsed faces and compute normals."""
    key = np.round(verts, decimals)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    v = verts[first[order]]
    t = rank[inverse[tris]]
    ok = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    t = t[ok]
    c = v[t]
    area = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    t = t[area > 1e-14]
    used = np.unique(t)
    remap = np.full(len(v), -1)
    remap[used] = np.arange(len(used))
    v, t = v[used], remap[t]
    return TriangleMesh(v, area_weighted_vertex_normals(v, t), t)


def _grid(fn, nu: int, nv: int, wrap_u: bool = True) -> TriangleMesh:
    """Triangulate a parametric surface fn(u, v) with u in [0, 1), v in [0, 1]."""
    us = np.arange(nu + (0 if wrap_u else 1)) / nu
    vs = np.linspace(0.0, 1.0, nv + 1)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    pts = fn(uu, vv).reshape(-1, 3)
    cols = nv + 1
    n_u = len(us)
    tris = []
    for i in range(nu):
        i2 = (i + 1) % n_u
        for j in range(nv):
            a, b = i * cols + j, i2 * cols + j
            c, d = i2 * cols + j + 1, i * cols + j + 1
            tris.append((a, b, c))
            tris.append((a, c, d))
    return _weld(pts, np.asarray(tris))


def icosphere(subdivisions: int = 2) -> TriangleMesh:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nf
    verts = np.array(verts)
    tris = np.array(faces)
    return TriangleMesh(verts, area_weighted_vertex_normals(verts, tris), tris)


def _random_rotation(rng: Prng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _place(mesh: TriangleMesh, rot: np.ndarray, offset) -> TriangleMesh:
    v = mesh.vertices @ rot.T + np.asarray(offset, float)
    return TriangleMesh(v, area_weighted_vertex_normals(v, mesh.triangles), mesh.triangles)


def bumpy_blob(rng: Prng, subdivisions: int = 3) -> TriangleMesh:
    """Sphere displaced radially by a few random Gaussian bumps and dents."""
    s = icosphere(subdivisions)
    dirs = rng.normal(size=(int(rng.integers(4, 10)), 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amp = rng.uniform(-0.35, 0.45, size=len(dirs))
    width = rng.uniform(0.15, 0.6, size=len(dirs))
    cosang = s.vertices @ dirs.T
    radial = 1.0 + (amp * np.exp(-(1.0 - cosang) / width)).sum(axis=1)
    scale = rng.uniform(0.5, 1.2, size=3)
    v = s.vertices * radial[:, None] * scale
    return TriangleMesh(v, area_weighted_vertex_normals(v, s.triangles), s.triangles)


def _spow(x, e):
    return np.sign(x) * np.abs(x) ** e


def superquadric(rng: Prng) -> TriangleMesh:
    e1, e2 = rng.uniform(0.25, 1.8, size=2)
    ax = rng.uniform(0.4, 1.2, size=3)

    def fn(u, v):
        th = 2 * np.pi * u
        ph = np.pi * (v - 0.5)
        cp, sp = np.cos(ph), np.sin(ph)
        return np.stack([ax[0] * _spow(cp, e1) * _spow(np.cos(th), e2),
                         ax[1] * _spow(cp, e1) * _spow(np.sin(th), e2),
                         ax[2] * _spow(sp, e1)], axis=-1)

    return _grid(fn, int(rng.integers(20, 32)), int(rng.integers(12, 20)))


def torus(rng: Prng) -> TriangleMesh:
    big = rng.uniform(0.6, 1.0)
    small = rng.uniform(0.15, 0.45) * big
    squash = rng.uniform(0.6, 1.0)
    twist = rng.uniform(0.0, 0.3)

    def fn(u, v):
        th = 2 * np.pi * u
        ph = 2 * np.pi * v
        r = small * (1.0 + twist * np.cos(3 * th))
        return np.stack([(big + r * np.cos(ph)) * np.cos(th),
                         (big + r * np.cos(ph)) * np.sin(th) * squash,
                         r * np.sin(ph)], axis=-1)

    mesh = _grid(fn, int(rng.integers(24, 36)), int(rng.integers(10, 16)))
    return mesh


def knot_tube(rng: Prng) -> TriangleMesh:
    """Tube swept along a (p, q) torus knot or a wobbly closed curve."""
    p, q = [(2, 3), (3, 2), (2, 5), (3, 4), (1, 3)][int(rng.integers(0, 5))]
    tube = rng.uniform(0.12, 0.25)
    n_u = int(rng.integers(60, 90))
    n_v = 8
    t = np.arange(n_u) / n_u * 2 * np.pi
    r = np.cos(q * t) + 2.0
    curve = np.stack([r * np.cos(p * t), r * np.sin(p * t), -np.sin(q * t)], axis=1) / 3.0
    tangent = np.roll(curve, -1, axis=0) - np.roll(curve, 1, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    ref = np.array([0.3, 0.5, 0.81])
    nrm = np.cross(tangent, ref)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    bin_ = np.cross(tangent, nrm)
    ang = np.arange(n_v) / n_v * 2 * np.pi
    pts = (curve[:, None, :] + tube * (np.cos(ang)[None, :, None] * nrm[:, None, :]
                                       + np.sin(ang)[None, :, None] * bin_[:, None, :]))
    tris = []
    for i in range(n_u):
        i2 = (i + 1) % n_u
        for j in range(n_v):
            j2 = (j + 1) % n_v
            a, b, c, d = i * n_v + j, i2 * n_v + j, i2 * n_v + j2, i * n_v + j2
            tris += [(a, b, c), (a, c, d)]
    return _weld(pts.reshape(-1, 3), np.asarray(tris))


def _box(sx, sy, sz, k=3) -> TriangleMesh:
    def fn(u, v):
        # cube-sphere style: map a parametric sphere onto a box with slight rounding
        th = 2 * np.pi * u
        ph = np.pi * (v - 0.5)
        return np.stack([sx * _spow(np.cos(ph), 0.2) * _spow(np.cos(th), 0.2),
                         sy * _spow(np.cos(ph), 0.2) * _spow(np.sin(th), 0.2),
                         sz * _spow(np.sin(ph), 0.2)], axis=-1)

    return _grid(fn, 4 * k + 4, 2 * k + 2)


def _cylinder(radius, height, n=14) -> TriangleMesh:
    def fn(u, v):
        th = 2 * np.pi * u
        # v in [0,1]: bottom cap, side, top cap
        rr = np.where(v < 0.2, radius * v / 0.2, np.where(v > 0.8, radius * (1 - v) / 0.2, radius))
        zz = np.where(v < 0.2, -height / 2, np.where(v > 0.8, height / 2, height * (v - 0.5) / 0.6))
        return np.stack([rr * np.cos(th), rr * np.sin(th), zz], axis=-1)

    return _grid(fn, n, 10)


def assembly(rng: Prng) -> TriangleMesh:
    """Table-, lamp- or rack-like union of boxes and cylinders."""
    kind = int(rng.integers(0, 3))
    parts = []
    if kind == 0:
        w, d = rng.uniform(0.8, 1.4, size=2)
        parts.append(_place(_box(w, d, 0.08), np.eye(3), (0, 0, 0.5)))
        legs = int(rng.integers(3, 5))
        for i in range(legs):
            ang = 2 * np.pi * (i + rng.uniform(-0.2, 0.2)) / legs
            pos = (0.8 * w * math.cos(ang), 0.8 * d * math.sin(ang), 0.0)
            parts.append(_place(_cylinder(rng.uniform(0.05, 0.1), 1.0), np.eye(3), pos))
    elif kind == 1:
        parts.append(_place(_cylinder(0.4, 0.1), np.eye(3), (0, 0, -0.8)))
        parts.append(_place(_cylinder(0.06, 1.4), np.eye(3), (0, 0, 0.0)))
        shade = superquadric(rng)
        parts.append(_place(shade, np.diag([0.5, 0.5, 0.4]), (0, 0, 0.8)))
    else:
        h = rng.uniform(1.0, 1.6)
        for sx in (-0.6, 0.6):
            parts.append(_place(_box(0.06, 0.4, h / 2), np.eye(3), (sx, 0, 0)))
        for level in range(int(rng.integers(2, 5))):
            z = -h / 2 + (level + 0.5) * h / 4
            parts.append(_place(_box(0.6, 0.4, 0.04), np.eye(3), (0, 0, z)))
    return concatenate(parts)


FAMILIES = (bumpy_blob, superquadric, torus, knot_tube, assembly)


def generate_mesh(seed: int, index: int) -> TriangleMesh:
    rng = Prng(seed, ("corpus", index))
    family = FAMILIES[index % len(FAMILIES)]
    mesh = family(rng)
    return _place(mesh, _random_rotation(rng), rng.uniform(-0.5, 0.5, size=3))


def write_corpus(directory, count: int = 60, seed: int = 2020) -> list[Path]:
    """Write ``count`` meshes as OBJ files (every fifth one as binary PLY)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        mesh = generate_mesh(seed, i)
        if i % 5 == 4:
            path = out / f"mesh_{i:04d}.ply"
            write_ply(mesh, path)
        else:
            path = out / f"mesh_{i:04d}.obj"
            write_obj(mesh, path)
        paths.append(path)
    return paths


def write_ply(mesh: TriangleMesh, path) -> None:
    from plyfile import PlyData, PlyElement

    vert = np.empty(mesh.vertex_count, dtype=[("x", "f8"), ("y", "f8"), ("z", "f8"),
                                              ("nx", "f8"), ("ny", "f8"), ("nz", "f8")])
    for k, name in enumerate("xyz"):
        vert[name] = mesh.vertices[:, k]
        vert["n" + name] = mesh.normals[:, k]
    face = np.empty(mesh.triangle_count, dtype=[("vertex_indices", "i4", (3,))])
    face["vertex_indices"] = mesh.triangles
    PlyData([PlyElement.describe(vert, "vertex"), PlyElement.describe(face, "face")]).write(str(path))
