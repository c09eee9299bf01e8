"""Projection of 3D points into (alpha, beta) cylindrical coordinates.

``alpha`` is the distance of a point to the central axis of an oriented
point and ``beta`` its signed offset along that axis. The fast path aligns
the spin normal with +z using two planar rotations whose sine/cosine pairs
depend only on the normal, so they are computed once per anchor. The oracle
path builds an orthonormal frame with cross products and applies a 3x3
matrix.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np

from .mesh import OrientedPoint
from .rng import Prng

IDENTITY_EPS = 1e-12


class CylindricalCoord(NamedTuple):
    alpha: np.ndarray | float
    beta: np.ndarray | float


@dataclass(frozen=True)
class ProjectionBasis:
    na_x: float
    na_y: float
    nb_x: float
    nb_z: float
    origin: np.ndarray
    first_identity: bool
    second_identity: bool


@nb.njit(cache=True, inline="always")
def basis_coefficients(nx, ny, nz):
    """(na_x, na_y, nb_x, nb_z, first_identity, second_identity) for a unit normal."""
    la = math.sqrt(nx * nx + ny * ny)
    if la < IDENTITY_EPS:
        na_x, na_y, first_id = 1.0, 0.0, True
        nx_rot = 0.0
    else:
        na_x, na_y = nx / la, ny / la
        first_id = na_x == 1.0 and na_y == 0.0
        # x component of the normal after the first rotation
        nx_rot = la
    lb = math.sqrt(nx_rot * nx_rot + nz * nz)
    if lb < IDENTITY_EPS:
        nb_x, nb_z, second_id = 0.0, 1.0, True
    else:
        nb_x, nb_z = nx_rot / lb, nz / lb
        second_id = nb_x == 0.0 and nb_z == 1.0
    return na_x, na_y, nb_x, nb_z, first_id, second_id


@nb.njit(cache=True, inline="always")
def rotate_relative(na_x, na_y, nb_x, nb_z, px, py, pz):
    """Apply both alignment rotations to an already translated point."""
    x1 = na_x * px + na_y * py
    y1 = -na_y * px + na_x * py
    tx = nb_z * x1 - nb_x * pz
    tz = nb_x * x1 + nb_z * pz
    return tx, y1, tz


@nb.njit(cache=True, inline="always")
def oracle_frame(nx, ny, nz):
    """Rows (u, v, n) of an orthonormal frame whose third axis is ``n``."""
    ax, ay, az = abs(nx), abs(ny), abs(nz)
    # cross product with the coordinate axis least aligned with n
    if ax <= ay and ax <= az:
        ux, uy, uz = 0.0, -nz, ny
    elif ay <= az:
        ux, uy, uz = nz, 0.0, -nx
    else:
        ux, uy, uz = -ny, nx, 0.0
    inv = 1.0 / math.sqrt(ux * ux + uy * uy + uz * uz)
    ux, uy, uz = ux * inv, uy * inv, uz * inv
    vx = ny * uz - nz * uy
    vy = nz * ux - nx * uz
    vz = nx * uy - ny * ux
    return ux, uy, uz, vx, vy, vz


@nb.njit(cache=True, inline="always")
def oracle_project_one(svx, svy, svz, nx, ny, nz, px, py, pz):
    ux, uy, uz, vx, vy, vz = oracle_frame(nx, ny, nz)
    dx, dy, dz = px - svx, py - svy, pz - svz
    x = ux * dx + uy * dy + uz * dz
    y = vx * dx + vy * dy + vz * dz
    z = nx * dx + ny * dy + nz * dz
    return math.sqrt(x * x + y * y), z


@nb.njit(cache=True, fastmath=False)
def _two_rotation_kernel(points, ox, oy, oz, na_x, na_y, nb_x, nb_z, alpha, beta):
    for i in range(points.shape[0]):
        tx, ty, tz = rotate_relative(na_x, na_y, nb_x, nb_z,
                                     points[i, 0] - ox, points[i, 1] - oy, points[i, 2] - oz)
        alpha[i] = math.sqrt(tx * tx + ty * ty)
        beta[i] = tz


@nb.njit(cache=True, fastmath=False)
def _oracle_kernel(points, anchor, alpha, beta):
    # anchor = (svx, svy, svz, nx, ny, nz); the frame is rebuilt for every point,
    # matching a per-point call of project_oracle(anchor, p).
    for i in range(points.shape[0]):
        a, b = oracle_project_one(anchor[0], anchor[1], anchor[2], anchor[3], anchor[4], anchor[5],
                                  points[i, 0], points[i, 1], points[i, 2])
        alpha[i] = a
        beta[i] = b


def build_basis(anchor: OrientedPoint) -> ProjectionBasis:
    n = anchor.normal
    if not np.linalg.norm(n) > 0:
        raise ValueError("zero spin normal")
    na_x, na_y, nb_x, nb_z, f1, f2 = basis_coefficients(float(n[0]), float(n[1]), float(n[2]))
    return ProjectionBasis(na_x, na_y, nb_x, nb_z, anchor.position.copy(), bool(f1), bool(f2))


def project(basis: ProjectionBasis, p, dtype=np.float32) -> CylindricalCoord:
    """Two-rotation projection of one point or an (M, 3) array of points."""
    pts = np.asarray(p, dtype=dtype)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    rel = pts - basis.origin.astype(dtype)
    x, y, z = rel[:, 0], rel[:, 1], rel[:, 2]
    c = lambda v: dtype(v)  # noqa: E731 - keep every product in the working precision
    if not basis.first_identity:
        x, y = c(basis.na_x) * x + c(basis.na_y) * y, -c(basis.na_y) * x + c(basis.na_x) * y
    if not basis.second_identity:
        x, z = c(basis.nb_z) * x - c(basis.nb_x) * z, c(basis.nb_x) * x + c(basis.nb_z) * z
    alpha = np.sqrt(x * x + y * y)
    if single:
        return CylindricalCoord(alpha[0], z[0])
    return CylindricalCoord(alpha, z)


def project_oracle(anchor: OrientedPoint, p) -> CylindricalCoord:
    """Matrix-frame projection in double precision."""
    n = np.asarray(anchor.normal, dtype=np.float64)
    if not np.linalg.norm(n) > 0:
        raise ValueError("zero spin normal")
    ux, uy, uz, vx, vy, vz = oracle_frame(float(n[0]), float(n[1]), float(n[2]))
    frame = np.array([[ux, uy, uz], [vx, vy, vz], n])
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    local = (pts.reshape(-1, 3) - anchor.position) @ frame.T
    alpha = np.hypot(local[:, 0], local[:, 1])
    if single:
        return CylindricalCoord(float(alpha[0]), float(local[0, 2]))
    return CylindricalCoord(alpha, local[:, 2])


@dataclass
class ProjectionBenchResult:
    count: int
    elapsed_two_rotation: float
    elapsed_oracle: float
    checksum: float
    max_abs_diff: float

    @property
    def speedup(self) -> float:
        return self.elapsed_oracle / self.elapsed_two_rotation


def bench_projection(count: int, rng: Prng, chunk: int = 1 << 20, verify: int = 4096) -> ProjectionBenchResult:
    """Time both projection paths on ``count`` random points around one fixed anchor.

    Points are drawn in chunks (generation is excluded from the timings). The
    two-rotation path runs in float32 with the basis computed once; the oracle
    path runs in float64 and rebuilds its frame for each point.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    arng = rng.child("anchor")
    normal = arng.normal(size=3)
    normal /= np.linalg.norm(normal)
    anchor = OrientedPoint(arng.uniform(-1, 1, size=3), normal)
    basis = build_basis(anchor)
    anchor_vec = np.concatenate([anchor.position, anchor.normal])
    o32 = basis.origin.astype(np.float32)
    coeffs32 = [np.float32(v) for v in (basis.na_x, basis.na_y, basis.nb_x, basis.nb_z)]

    # Warm up both kernels so compilation never lands inside a timed region.
    warm = np.zeros((2, 3))
    _two_rotation_kernel(warm.astype(np.float32), o32[0], o32[1], o32[2], *coeffs32,
                         np.empty(2, np.float32), np.empty(2, np.float32))
    _oracle_kernel(warm, anchor_vec, np.empty(2), np.empty(2))

    prng = rng.child("points")
    t_fast = t_oracle = 0.0
    checksum = 0.0
    max_diff = 0.0
    done = 0
    while done < count:
        m = min(chunk, count - done)
        pts64 = prng.uniform(-1.0, 1.0, size=(m, 3))
        pts32 = pts64.astype(np.float32)
        a32, b32 = np.empty(m, np.float32), np.empty(m, np.float32)
        a64, b64 = np.empty(m), np.empty(m)
        t0 = time.perf_counter()
        _two_rotation_kernel(pts32, o32[0], o32[1], o32[2], *coeffs32, a32, b32)
        t1 = time.perf_counter()
        _oracle_kernel(pts64, anchor_vec, a64, b64)
        t2 = time.perf_counter()
        t_fast += t1 - t0
        t_oracle += t2 - t1
        checksum += float(a32.sum(dtype=np.float64) + b32.sum(dtype=np.float64))
        if done == 0:
            k = min(verify, m)
            max_diff = float(max(np.abs(a32[:k] - a64[:k]).max(), np.abs(b32[:k] - b64[:k]).max()))
            if max_diff > 1e-4:
                raise AssertionError(f"projection paths disagree by {max_diff}")
        done += m
    return ProjectionBenchResult(count, t_fast, t_oracle, checksum, max_diff)
