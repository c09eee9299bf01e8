"""Radial intersection count images and the clutter-resistant distance.

Bin ``[r, c]`` of an N x N image counts how often the circle of radius
``(c + 0.5) * R / N`` lying in the plane ``beta = (r + 0.5) * R / N - R / 2``
(centred on the central axis) crosses the scene surface. Triangles are
rasterised row by row: each row plane cuts a triangle in a segment, and the
radii hit once or twice by that segment follow from its endpoints and its
closest point to the axis.

A vertex lying exactly on a row plane is treated as lying above it, so a
surface passing through an edge or vertex is counted consistently by the
triangles sharing it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .mesh import OrientedPoint, TriangleMesh, concatenate, triangle_areas
from .projection import basis_coefficients, rotate_relative

DEFAULT_RESOLUTION = 64
DEFAULT_SUPPORT_RADIUS = 0.3
EDGE_EPS = 1e-12

ROW_NONE = 0
ROW_HIT = 1
ROW_COPLANAR = 2
ROW_DEGENERATE = 3


class CoplanarTriangle(ValueError):
    """The triangle lies in the circle plane; its intersection count is unbounded."""


@dataclass(frozen=True)
class IntersectionRanges:
    has_double: bool
    r_low: float
    r_mid: float
    r_high: float

    @property
    def double_range(self) -> tuple[float, float] | None:
        return (self.r_low, self.r_mid) if self.has_double else None

    @property
    def single_range(self) -> tuple[float, float]:
        return (self.r_mid, self.r_high)

    def count(self, radius: float) -> int:
        if self.has_double and self.r_low <= radius < self.r_mid:
            return 2
        if self.r_mid <= radius <= self.r_high:
            return 1
        return 0


@dataclass(frozen=True, eq=False)
class RiciDescriptor:
    bins: np.ndarray
    support_radius: float
    resolution: int

    def __eq__(self, other):
        return (isinstance(other, RiciDescriptor) and self.resolution == other.resolution
                and self.support_radius == other.support_radius
                and np.array_equal(self.bins, other.bins))


@nb.njit(cache=True)
def _row_ranges(x0, y0, z0, x1, y1, z1, x2, y2, z2, beta):
    """Intersect one aligned triangle with the plane ``z = beta``.

    Returns ``(status, has_double, r_low, r_mid, r_high)``.
    """
    a0, a1, a2 = z0 >= beta, z1 >= beta, z2 >= beta
    n_above = int(a0) + int(a1) + int(a2)
    if n_above == 0 or n_above == 3:
        if z0 == beta and z1 == beta and z2 == beta:
            return ROW_COPLANAR, False, 0.0, 0.0, 0.0
        return ROW_NONE, False, 0.0, 0.0, 0.0
    # the vertex alone on its side of the plane
    if (n_above == 1) == a0:
        lx, ly, lz, jx, jy, jz, kx, ky, kz = x0, y0, z0, x1, y1, z1, x2, y2, z2
    elif (n_above == 1) == a1:
        lx, ly, lz, jx, jy, jz, kx, ky, kz = x1, y1, z1, x2, y2, z2, x0, y0, z0
    else:
        lx, ly, lz, jx, jy, jz, kx, ky, kz = x2, y2, z2, x0, y0, z0, x1, y1, z1
    dj = jz - lz
    dk = kz - lz
    if abs(dj) < EDGE_EPS or abs(dk) < EDGE_EPS:
        return ROW_DEGENERATE, False, 0.0, 0.0, 0.0
    tj = (beta - lz) / dj
    tk = (beta - lz) / dk
    ex0 = lx + tj * (jx - lx)
    ey0 = ly + tj * (jy - ly)
    ex1 = lx + tk * (kx - lx)
    ey1 = ly + tk * (ky - ly)
    dx = ex1 - ex0
    dy = ey1 - ey0
    seg = math.sqrt(dx * dx + dy * dy)
    if seg < EDGE_EPS:
        return ROW_DEGENERATE, False, 0.0, 0.0, 0.0
    cs = dx / seg
    sn = dy / seg
    # rotate so the segment runs along +x; the shared y is the offset of the closest point
    rx0 = cs * ex0 + sn * ey0
    rx1 = cs * ex1 + sn * ey1
    c_len = abs(-sn * ex0 + cs * ey0)
    d0 = math.sqrt(ex0 * ex0 + ey0 * ey0)
    d1 = math.sqrt(ex1 * ex1 + ey1 * ey1)
    r_mid = min(d0, d1)
    r_high = max(d0, d1)
    has_double = (rx0 < 0.0 and rx1 > 0.0) or (rx0 > 0.0 and rx1 < 0.0)
    r_low = min(c_len, r_mid) if has_double else r_mid
    return ROW_HIT, has_double, r_low, r_mid, r_high


@nb.njit(cache=True, inline="always")
def _first_column(radius, bs, inv_bs, n, inclusive):
    """Index of the first column whose circle radius is >= ``radius`` (> when not inclusive)."""
    c = int(math.ceil(min(max(radius * inv_bs - 0.5, 0.0), float(n))))
    if inclusive:
        while c > 0 and (c - 0.5) * bs >= radius:
            c -= 1
        while c < n and (c + 0.5) * bs < radius:
            c += 1
    else:
        while c > 0 and (c - 0.5) * bs > radius:
            c -= 1
        while c < n and (c + 0.5) * bs <= radius:
            c += 1
    return c


@nb.njit(cache=True, inline="always")
def _fill_row(delta, r, n, bs, inv_bs, has_double, r_low, r_mid, r_high):
    # delta is (n, n + 1): +k at a range start, -k one past its end; prefix sums give the counts
    b = _first_column(r_mid, bs, inv_bs, n, True)
    e = _first_column(r_high, bs, inv_bs, n, False)
    if has_double:
        delta[r, _first_column(r_low, bs, inv_bs, n, True)] += 2
        delta[r, b] -= 1
    else:
        delta[r, b] += 1
    delta[r, e] -= 1


@nb.njit(cache=True, inline="always")
def _rasterise_triangle(x0, y0, z0, x1, y1, z1, x2, y2, z2, radius, n, delta, diag):
    """Accumulate the intersection counts of one aligned triangle as row deltas (see :func:`_fill_row`).

    Same classification as :func:`_row_ranges`, with the vertices sorted by
    height once so that each row reduces to evaluating two linear edges.
    """
    bs = radius / n
    inv_bs = n / radius
    half = 0.5 * radius
    r2_reach = radius * radius * (1.0 + 1e-9)
    zmin = min(z0, z1, z2)
    zmax = max(z0, z1, z2)
    if zmax < -half or zmin > half:
        return
    # triangle outside the square prism enclosing the support cylinder
    if min(x0, x1, x2) > radius or max(x0, x1, x2) < -radius:
        return
    if min(y0, y1, y2) > radius or max(y0, y1, y2) < -radius:
        return
    # sort by z: (lx, ly, lz) <= (mx, my, mz) <= (hx, hy, hz)
    lx, ly, lz, mx, my, mz, hx, hy, hz = x0, y0, z0, x1, y1, z1, x2, y2, z2
    if mz < lz:
        lx, ly, lz, mx, my, mz = mx, my, mz, lx, ly, lz
    if hz < mz:
        mx, my, mz, hx, hy, hz = hx, hy, hz, mx, my, mz
        if mz < lz:
            lx, ly, lz, mx, my, mz = mx, my, mz, lx, ly, lz
    r_lo = int(math.floor((zmin + half) * inv_bs - 0.5))
    r_hi = int(math.ceil((zmax + half) * inv_bs - 0.5))
    if r_lo < 0:
        r_lo = 0
    if r_hi > n - 1:
        r_hi = n - 1
    # lower half: lone vertex is the lowest, edges towards mid and high
    lo_ok = (mz - lz) >= EDGE_EPS and (hz - lz) >= EDGE_EPS
    hi_ok = (hz - lz) >= EDGE_EPS and (hz - mz) >= EDGE_EPS
    sjx = sjy = skx = sky = 0.0
    tjx = tjy = tkx = tky = 0.0
    if lo_ok:
        sjx = (mx - lx) / (mz - lz)
        sjy = (my - ly) / (mz - lz)
        skx = (hx - lx) / (hz - lz)
        sky = (hy - ly) / (hz - lz)
    if hi_ok:
        tjx = (lx - hx) / (lz - hz)
        tjy = (ly - hy) / (lz - hz)
        tkx = (mx - hx) / (mz - hz)
        tky = (my - hy) / (mz - hz)
    for r in range(r_lo, r_hi + 1):
        beta = (r + 0.5) * bs - half
        if beta <= lz or beta > hz:
            if lz == beta and hz == beta:
                diag[0] += 1
            continue
        if beta <= mz:
            if not lo_ok:
                diag[1] += 1
                continue
            h = beta - lz
            ex0 = lx + h * sjx
            ey0 = ly + h * sjy
            ex1 = lx + h * skx
            ey1 = ly + h * sky
        else:
            if not hi_ok:
                diag[1] += 1
                continue
            h = beta - hz
            ex0 = hx + h * tjx
            ey0 = hy + h * tjy
            ex1 = hx + h * tkx
            ey1 = hy + h * tky
        dx = ex1 - ex0
        dy = ey1 - ey0
        seg2 = dx * dx + dy * dy
        if seg2 < EDGE_EPS * EDGE_EPS:
            diag[1] += 1
            continue
        q0 = ex0 * ex0 + ey0 * ey0
        q1 = ex1 * ex1 + ey1 * ey1
        p0 = ex0 * dx + ey0 * dy
        p1 = ex1 * dx + ey1 * dy
        has_double = (p0 < 0.0 and p1 > 0.0) or (p0 > 0.0 and p1 < 0.0)
        cross = ex0 * dy - ey0 * dx
        # closest squared distance of the segment to the axis; rows out of reach stop here
        near2 = cross * cross / seg2 if has_double else min(q0, q1)
        if near2 > r2_reach:
            continue
        d0 = math.sqrt(q0)
        d1 = math.sqrt(q1)
        r_mid = min(d0, d1)
        r_high = max(d0, d1)
        r_low = r_mid
        if has_double:
            c_len = abs(cross) / math.sqrt(seg2)
            if c_len < r_mid:
                r_low = c_len
        _fill_row(delta, r, n, bs, inv_bs, has_double, r_low, r_mid, r_high)


@nb.njit(cache=True)
def _rici_one(corners, cx, cy, cz, reach, anchor, radius, n, out, diag, near, delta):
    na_x, na_y, nb_x, nb_z, _, _ = basis_coefficients(anchor[3], anchor[4], anchor[5])
    ax, ay, az = anchor[0], anchor[1], anchor[2]
    # bounding-sphere test against the sphere enclosing the support cylinder
    count = 0
    for t in range(cx.shape[0]):
        dx = cx[t] - ax
        dy = cy[t] - ay
        dz = cz[t] - az
        near[count] = t
        count += dx * dx + dy * dy + dz * dz <= reach[t]
    for i in range(count):
        c = corners[near[i]]
        x0, y0, z0 = rotate_relative(na_x, na_y, nb_x, nb_z, c[0] - ax, c[1] - ay, c[2] - az)
        x1, y1, z1 = rotate_relative(na_x, na_y, nb_x, nb_z, c[3] - ax, c[4] - ay, c[5] - az)
        x2, y2, z2 = rotate_relative(na_x, na_y, nb_x, nb_z, c[6] - ax, c[7] - ay, c[8] - az)
        _rasterise_triangle(x0, y0, z0, x1, y1, z1, x2, y2, z2, radius, n, delta, diag)
    for r in range(n):
        acc = 0
        for c in range(n):
            acc += delta[r, c]
            out[r, c] = acc


@nb.njit(cache=True, parallel=True)
def _rici_batch(corners, cx, cy, cz, reach, anchors, radius, n, out, diag):
    for a in nb.prange(anchors.shape[0]):
        near = np.empty(cx.shape[0], dtype=np.int64)
        delta = np.zeros((n, n + 1), dtype=np.int32)
        _rici_one(corners, cx, cy, cz, reach, anchors[a], radius, n, out[a], diag[a], near, delta)


def _cull_spheres(corners: np.ndarray, radius: float):
    """Per-triangle centroid coordinates and the squared distance beyond which it cannot reach the support cylinder."""
    c = corners.reshape(-1, 3, 3)
    centres = c.mean(axis=1)
    spread = np.sqrt(((c - centres[:, None]) ** 2).sum(axis=2)).max(axis=1)
    # generous margin so rounding never culls a triangle that touches the cylinder
    reach = radius * math.sqrt(1.25) + spread
    reach = reach * (1.0 + 1e-9) + 1e-12
    cx, cy, cz = (np.ascontiguousarray(centres[:, k]) for k in range(3))
    return cx, cy, cz, reach * reach


def _scene_arrays(scene) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scene, TriangleMesh):
        mesh = scene
    else:
        mesh = concatenate([m[0] if isinstance(m, tuple) else m for m in scene])
    verts = np.ascontiguousarray(mesh.vertices, dtype=np.float64)
    tris = np.ascontiguousarray(mesh.triangles, dtype=np.int64)
    if len(tris):
        c = verts[tris]
        tris = np.ascontiguousarray(tris[triangle_areas(c[:, 0], c[:, 1], c[:, 2]) > 0.0])
    return verts, tris


def anchor_array(anchors) -> np.ndarray:
    """(A, 6) float64 rows of position and normal."""
    if isinstance(anchors, OrientedPoint):
        anchors = [anchors]
    if isinstance(anchors, np.ndarray):
        return np.ascontiguousarray(anchors, dtype=np.float64).reshape(-1, 6)
    return np.array([np.concatenate([a.position, a.normal]) for a in anchors],
                    dtype=np.float64).reshape(-1, 6)


def generate_rici_batch(scene, anchors, support_radius: float = DEFAULT_SUPPORT_RADIUS,
                        resolution: int = DEFAULT_RESOLUTION, diagnostics: dict | None = None) -> np.ndarray:
    """RICI images for many anchors over one scene, shape (A, N, N), int32."""
    if not support_radius > 0:
        raise ValueError("support radius must be positive")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    verts, tris = _scene_arrays(scene)
    arr = anchor_array(anchors)
    out = np.zeros((len(arr), resolution, resolution), dtype=np.int32)
    diag = np.zeros((len(arr), 2), dtype=np.int64)
    if len(arr) and len(tris):
        corners = np.ascontiguousarray(verts[tris].reshape(-1, 9))
        cx, cy, cz, reach = _cull_spheres(corners, float(support_radius))
        _rici_batch(corners, cx, cy, cz, reach, arr, float(support_radius), int(resolution), out, diag)
    if diagnostics is not None:
        diagnostics["coplanar_rows"] = diagnostics.get("coplanar_rows", 0) + int(diag[:, 0].sum())
        diagnostics["degenerate_rows"] = diagnostics.get("degenerate_rows", 0) + int(diag[:, 1].sum())
    return out


def generate_rici(scene, anchor: OrientedPoint, support_radius: float = DEFAULT_SUPPORT_RADIUS,
                  resolution: int = DEFAULT_RESOLUTION) -> RiciDescriptor:
    bins = generate_rici_batch(scene, [anchor], support_radius, resolution)[0]
    return RiciDescriptor(bins, float(support_radius), int(resolution))


def intersect_triangle_row(t0, t1, t2, beta: float) -> IntersectionRanges | None:
    """Single/double intersection radius ranges of an aligned triangle at height ``beta``.

    Returns None when the plane misses the triangle or only touches a vertex.
    Raises :class:`CoplanarTriangle` when the triangle lies in the plane.
    """
    p = np.asarray([t0, t1, t2], dtype=np.float64)
    status, has_double, r_low, r_mid, r_high = _row_ranges(*p.ravel(), float(beta))
    if status == ROW_COPLANAR:
        raise CoplanarTriangle("triangle is coplanar with the circle plane")
    if status != ROW_HIT:
        return None
    return IntersectionRanges(bool(has_double), r_low, r_mid, r_high)


# --------------------------------------------------------------------------
# clutter-resistant distance


@nb.njit(cache=True)
def _crd_dense(needle, haystack):
    n_rows, n_cols = needle.shape
    score = 0
    for r in range(n_rows):
        for c in range(1, n_cols):
            nd = needle[r, c] - needle[r, c - 1]
            if nd != 0:
                diff = nd - (haystack[r, c] - haystack[r, c - 1])
                score += diff * diff
    return score


@nb.njit(cache=True)
def _crd_dense_early(needle, haystack, threshold):
    n_rows, n_cols = needle.shape
    score = 0
    for r in range(n_rows):
        for c in range(1, n_cols):
            nd = needle[r, c] - needle[r, c - 1]
            if nd != 0:
                diff = nd - (haystack[r, c] - haystack[r, c - 1])
                score += diff * diff
                if score > threshold:
                    return score
    return score


def _check_pair(needle: RiciDescriptor, haystack: RiciDescriptor):
    if needle.resolution != haystack.resolution or needle.bins.shape != haystack.bins.shape:
        raise ValueError("descriptor resolutions differ")
    if not math.isclose(needle.support_radius, haystack.support_radius, rel_tol=1e-9):
        raise ValueError("descriptor support radii differ")


def crd_distance(needle, haystack, early_exit_threshold: int | None = None) -> int:
    """Clutter-resistant distance from ``needle`` to ``haystack``.

    Sums squared differences of horizontal bin deltas, only where the needle
    delta is non-zero. With ``early_exit_threshold`` the scan stops as soon
    as the partial sum exceeds it; the returned value is then only known to
    be larger than the threshold.
    """
    if isinstance(needle, RiciDescriptor):
        _check_pair(needle, haystack)
        n, h = needle.bins, haystack.bins
    else:
        n, h = np.asarray(needle), np.asarray(haystack)
        if n.shape != h.shape:
            raise ValueError("descriptor resolutions differ")
    n = np.ascontiguousarray(n, dtype=np.int64)
    h = np.ascontiguousarray(h, dtype=np.int64)
    if early_exit_threshold is None:
        return int(_crd_dense(n, h))
    return int(_crd_dense_early(n, h, int(early_exit_threshold)))


@nb.njit(cache=True, parallel=True)
def crd_matrix_dense(needles, haystacks):
    """Full distance matrix by the plain per-pixel scan, (A, N, N) x (B, N, N) -> (A, B)."""
    out = np.empty((needles.shape[0], haystacks.shape[0]), dtype=np.int64)
    for i in nb.prange(needles.shape[0]):
        for j in range(haystacks.shape[0]):
            out[i, j] = _crd_dense(needles[i], haystacks[j])
    return out


@nb.njit(cache=True, parallel=True)
def crd_count_below_dense(needles, haystacks, thresholds):
    """Per needle, how many haystacks satisfy ``CRD <= threshold`` (early exit scan)."""
    out = np.zeros(needles.shape[0], dtype=np.int64)
    for i in nb.prange(needles.shape[0]):
        thr = thresholds[i]
        cnt = 0
        for j in range(haystacks.shape[0]):
            if _crd_dense_early(needles[i], haystacks[j], thr) <= thr:
                cnt += 1
        out[i] = cnt
    return out


def horizontal_deltas(images: np.ndarray) -> np.ndarray:
    """bins[..., c] - bins[..., c - 1] for c >= 1, flattened per image, int32."""
    images = np.asarray(images)
    d = np.diff(images.astype(np.int32), axis=-1)
    return np.ascontiguousarray(d.reshape(images.shape[0], -1))


@nb.njit(cache=True, parallel=True)
def _sparse_crd_matrix(offsets, idx, vals, hay_deltas):
    n_needles = offsets.shape[0] - 1
    out = np.empty((n_needles, hay_deltas.shape[0]), dtype=np.int64)
    for i in nb.prange(n_needles):
        s, e = offsets[i], offsets[i + 1]
        for j in range(hay_deltas.shape[0]):
            score = 0
            for k in range(s, e):
                diff = vals[k] - hay_deltas[j, idx[k]]
                score += diff * diff
            out[i, j] = score
    return out


@nb.njit(cache=True, parallel=True)
def _sparse_crd_count_below(offsets, idx, vals, hay_deltas, thresholds):
    n_needles = offsets.shape[0] - 1
    out = np.zeros(n_needles, dtype=np.int64)
    for i in nb.prange(n_needles):
        s, e = offsets[i], offsets[i + 1]
        thr = thresholds[i]
        cnt = 0
        for j in range(hay_deltas.shape[0]):
            score = 0
            for k in range(s, e):
                diff = vals[k] - hay_deltas[j, idx[k]]
                score += diff * diff
                if score > thr:
                    break
            if score <= thr:
                cnt += 1
        out[i] = cnt
    return out


def _sparse_needles(needles: np.ndarray):
    d = horizontal_deltas(needles)
    rows, cols = np.nonzero(d)
    offsets = np.zeros(len(d) + 1, dtype=np.int64)
    np.add.at(offsets, rows + 1, 1)
    return np.cumsum(offsets), cols.astype(np.int64), d[rows, cols].astype(np.int64)


def crd_matrix(needles: np.ndarray, haystacks: np.ndarray) -> np.ndarray:
    """All-pairs CRD, visiting only the needle's non-zero deltas."""
    offsets, idx, vals = _sparse_needles(needles)
    return _sparse_crd_matrix(offsets, idx, vals, horizontal_deltas(haystacks))


def crd_count_at_most(needles: np.ndarray, haystacks: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Per needle, the number of haystacks with CRD <= its threshold (early exit)."""
    offsets, idx, vals = _sparse_needles(needles)
    thr = np.asarray(thresholds, dtype=np.int64)
    return _sparse_crd_count_below(offsets, idx, vals, horizontal_deltas(haystacks), thr)


@nb.njit(cache=True, parallel=True)
def _crd_paired(needles, haystacks):
    out = np.empty(needles.shape[0], dtype=np.int64)
    for i in nb.prange(needles.shape[0]):
        out[i] = _crd_dense(needles[i], haystacks[i])
    return out


def crd_paired(needles: np.ndarray, haystacks: np.ndarray) -> np.ndarray:
    """CRD(needles[i], haystacks[i]) for every i."""
    return _crd_paired(np.ascontiguousarray(needles, dtype=np.int32),
                       np.ascontiguousarray(haystacks, dtype=np.int32))
