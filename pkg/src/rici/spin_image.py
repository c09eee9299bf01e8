"""Spin images: bilinearly splatted (alpha, beta) histograms of surface samples."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .mesh import OrientedPoint, PointCloud
from .projection import basis_coefficients, rotate_relative
from .rici import anchor_array

DEFAULT_SUPPORT_ANGLE = 60.0


@dataclass(frozen=True, eq=False)
class SpinImageDescriptor:
    bins: np.ndarray
    support_radius: float
    resolution: int


def support_angle_cosine(support_angle_degrees: float | None) -> float:
    """Minimum normal dot product admitted by the filter; -2 disables filtering."""
    if support_angle_degrees is None or support_angle_degrees >= 180.0:
        return -2.0
    return math.cos(math.radians(support_angle_degrees))


@nb.njit(cache=True)
def _splat_one(pos, nrm, anchor, radius, n, min_cos, out):
    # out is (n + 2, n + 2): a one-pixel border catches weight falling off the image
    na_x, na_y, nb_x, nb_z, _, _ = basis_coefficients(anchor[3], anchor[4], anchor[5])
    bs = radius / n
    half = 0.5 * radius
    snx, sny, snz = anchor[3], anchor[4], anchor[5]
    for i in range(pos.shape[0]):
        if min_cos > -2.0:
            if nrm[i, 0] * snx + nrm[i, 1] * sny + nrm[i, 2] * snz < min_cos:
                continue
        tx, ty, tz = rotate_relative(na_x, na_y, nb_x, nb_z, pos[i, 0] - anchor[0],
                                     pos[i, 1] - anchor[1], pos[i, 2] - anchor[2])
        alpha = math.sqrt(tx * tx + ty * ty)
        if alpha > radius or tz > half or tz < -half:
            continue
        u = alpha / bs - 0.5
        v = (tz + half) / bs - 0.5
        c0 = int(math.floor(u))
        r0 = int(math.floor(v))
        fu = u - c0
        fv = v - r0
        out[r0 + 1, c0 + 1] += (1.0 - fu) * (1.0 - fv)
        out[r0 + 1, c0 + 2] += fu * (1.0 - fv)
        out[r0 + 2, c0 + 1] += (1.0 - fu) * fv
        out[r0 + 2, c0 + 2] += fu * fv


@nb.njit(cache=True, parallel=True)
def _si_batch(pos, nrm, anchors, radius, n, min_cos, out):
    for a in nb.prange(anchors.shape[0]):
        _splat_one(pos, nrm, anchors[a], radius, n, min_cos, out[a])


def generate_spin_image_batch(samples: PointCloud, anchors, support_radius: float = 0.3,
                              resolution: int = 64, support_angle_degrees: float | None = None,
                              keep_border: bool = False) -> np.ndarray:
    """Spin images for many anchors, shape (A, N, N) float64.

    With ``keep_border`` the (A, N+2, N+2) accumulation buffer is returned,
    including the weight that bilinear splatting pushes past the image edge.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if not support_radius > 0:
        raise ValueError("support radius must be positive")
    arr = anchor_array(anchors)
    out = np.zeros((len(arr), resolution + 2, resolution + 2), dtype=np.float64)
    if len(arr) and len(samples):
        pos = np.ascontiguousarray(samples.positions, dtype=np.float64)
        nrm = np.ascontiguousarray(samples.normals, dtype=np.float64)
        _si_batch(pos, nrm, arr, float(support_radius), int(resolution),
                  support_angle_cosine(support_angle_degrees), out)
    if keep_border:
        return out
    return np.ascontiguousarray(out[:, 1:-1, 1:-1])


def generate_spin_image(samples: PointCloud, anchor: OrientedPoint, support_radius: float = 0.3,
                        resolution: int = 64, support_angle_degrees: float | None = None) -> SpinImageDescriptor:
    bins = generate_spin_image_batch(samples, [anchor], support_radius, resolution, support_angle_degrees)[0]
    return SpinImageDescriptor(bins, float(support_radius), int(resolution))


def _flat(x) -> np.ndarray:
    if isinstance(x, SpinImageDescriptor):
        return x.bins.ravel().astype(np.float64)
    return np.asarray(x, dtype=np.float64).ravel()


def pearson_distance(a, b) -> float:
    """Pearson correlation of two images (a similarity; higher is better).

    Undefined for constant images, where -1 is returned unless both images
    are the same constant, which scores 1.
    """
    if isinstance(a, SpinImageDescriptor) and isinstance(b, SpinImageDescriptor):
        if a.resolution != b.resolution:
            raise ValueError("descriptor resolutions differ")
    x, y = _flat(a), _flat(b)
    if x.shape != y.shape:
        raise ValueError("descriptor resolutions differ")
    x_const = x.max() == x.min()
    y_const = y.max() == y.min()
    if x_const or y_const:
        return 1.0 if (x_const and y_const and x[0] == y[0]) else -1.0
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(xc @ yc / math.sqrt(float(xc @ xc) * float(yc @ yc)))
    return max(-1.0, min(1.0, r))


def _standardise(images: np.ndarray):
    flat = images.reshape(len(images), -1).astype(np.float64)
    const = flat.max(axis=1) == flat.min(axis=1)
    centred = flat - flat.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", centred, centred))
    norm[const] = 1.0
    z = centred / norm[:, None]
    z[const] = 0.0
    return z, const, flat[:, 0]


def pearson_matrix(needles: np.ndarray, haystacks: np.ndarray) -> np.ndarray:
    """All-pairs correlation, (A, N, N) x (B, N, N) -> (A, B)."""
    za, ca, va = _standardise(needles)
    zb, cb, vb = _standardise(haystacks)
    out = np.clip(za @ zb.T, -1.0, 1.0)
    if ca.any() or cb.any():
        out[ca, :] = -1.0
        out[:, cb] = -1.0
        both = np.outer(ca, cb) & (va[:, None] == vb[None, :])
        out[both] = 1.0
    return out
