"""3D shape contexts with density-compensated, volume-normalised log-polar bins."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.spatial import cKDTree

from .mesh import OrientedPoint, PointCloud
from .projection import basis_coefficients, rotate_relative
from .rici import anchor_array

AZIMUTH_BINS = 15
ELEVATION_BINS = 11
RADIAL_BINS = 12
MIN_RADIUS = 0.048
MAX_RADIUS = 0.3


@dataclass(frozen=True)
class ShapeContextParams:
    azimuth_bins: int = AZIMUTH_BINS
    elevation_bins: int = ELEVATION_BINS
    radial_bins: int = RADIAL_BINS
    r_min: float = MIN_RADIUS
    r_max: float = MAX_RADIUS

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if min(self.azimuth_bins, self.elevation_bins, self.radial_bins) < 1:
            raise ValueError("bin counts must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.azimuth_bins, self.elevation_bins, self.radial_bins


@dataclass(frozen=True, eq=False)
class ShapeContextDescriptor:
    bins: np.ndarray  # (J, K, L)
    params: ShapeContextParams


def radial_boundaries(r_min: float, r_max: float, count: int) -> np.ndarray:
    """``count + 1`` shell radii spaced evenly in log(r) from r_min to r_max."""
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    if count < 1:
        raise ValueError("need at least one radial shell")
    b = np.exp(np.log(r_min) + np.arange(count + 1) / count * np.log(r_max / r_min))
    b[0], b[-1] = r_min, r_max
    return b


def bin_volumes(params: ShapeContextParams) -> np.ndarray:
    """(K, L) volume of one azimuth sector of each elevation/radial cell."""
    j, k, l = params.shape
    radii = radial_boundaries(params.r_min, params.r_max, l)
    theta = np.arange(k + 1) * (np.pi / k)
    cos_band = np.cos(theta[:-1]) - np.cos(theta[1:])
    shell = (radii[1:] ** 3 - radii[:-1] ** 3) / 3.0
    return (2 * np.pi / j) * cos_band[:, None] * shell[None, :]


def local_density(samples: PointCloud, radius: float) -> np.ndarray:
    """Number of samples (itself included) within ``radius`` of each sample."""
    tree = cKDTree(samples.positions)
    return np.asarray(tree.query_ball_point(samples.positions, r=radius, return_length=True),
                      dtype=np.float64)


@nb.njit(cache=True, inline="always")
def spherical_bin(tx, ty, tz, d, j_bins, k_bins, l_bins, log_rmin, log_span, radii):
    phi = math.atan2(ty, tx)
    if phi < 0.0:
        phi += 2.0 * math.pi
    j = int(phi / (2.0 * math.pi / j_bins))
    if j >= j_bins:
        j = j_bins - 1
    c = tz / d
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    k = int(math.acos(c) / (math.pi / k_bins))
    if k >= k_bins:
        k = k_bins - 1
    l = int(l_bins * (math.log(d) - log_rmin) / log_span)
    if l < 0:
        l = 0
    if l > l_bins - 1:
        l = l_bins - 1
    # settle on the shell (radii[l], radii[l + 1]] exactly
    while l > 0 and d <= radii[l]:
        l -= 1
    while l < l_bins - 1 and d > radii[l + 1]:
        l += 1
    return j, k, l


@nb.njit(cache=True)
def _sc_one(pos, density, anchor, j_bins, k_bins, l_bins, radii, inv_cbrt_vol, out):
    na_x, na_y, nb_x, nb_z, _, _ = basis_coefficients(anchor[3], anchor[4], anchor[5])
    r_min = radii[0]
    r_max = radii[l_bins]
    rmin2 = r_min * r_min
    rmax2 = r_max * r_max
    log_rmin = math.log(r_min)
    log_span = math.log(r_max) - log_rmin
    for i in range(pos.shape[0]):
        dx = pos[i, 0] - anchor[0]
        dy = pos[i, 1] - anchor[1]
        dz = pos[i, 2] - anchor[2]
        d2 = dx * dx + dy * dy + dz * dz
        if d2 <= rmin2 or d2 > rmax2:
            continue
        d = math.sqrt(d2)
        if d <= r_min or d > r_max:
            continue
        tx, ty, tz = rotate_relative(na_x, na_y, nb_x, nb_z, dx, dy, dz)
        j, k, l = spherical_bin(tx, ty, tz, d, j_bins, k_bins, l_bins, log_rmin, log_span, radii)
        out[j, k, l] += inv_cbrt_vol[k, l] / density[i]


@nb.njit(cache=True, parallel=True)
def _sc_batch(pos, density, anchors, j_bins, k_bins, l_bins, radii, inv_cbrt_vol, out):
    for a in nb.prange(anchors.shape[0]):
        _sc_one(pos, density, anchors[a], j_bins, k_bins, l_bins, radii, inv_cbrt_vol, out[a])


def generate_shape_context_batch(samples: PointCloud, anchors, params: ShapeContextParams = ShapeContextParams(),
                                 local_density_radius: float | None = None,
                                 density: np.ndarray | None = None) -> np.ndarray:
    """Shape contexts for many anchors, shape (A, J, K, L) float64.

    ``density`` may be passed in when the same cloud is reused for several
    batches; otherwise it is computed with ``local_density_radius``
    (default ``params.r_min``).
    """
    arr = anchor_array(anchors)
    j, k, l = params.shape
    out = np.zeros((len(arr), j, k, l), dtype=np.float64)
    if not len(arr) or not len(samples):
        return out
    if density is None:
        density = local_density(samples, local_density_radius or params.r_min)
    radii = radial_boundaries(params.r_min, params.r_max, l)
    inv_cbrt_vol = 1.0 / np.cbrt(bin_volumes(params))
    _sc_batch(np.ascontiguousarray(samples.positions, dtype=np.float64),
              np.ascontiguousarray(density, dtype=np.float64), arr, j, k, l, radii, inv_cbrt_vol, out)
    return out


def generate_shape_context(samples: PointCloud, anchor: OrientedPoint, params: ShapeContextParams = ShapeContextParams(),
                           local_density_radius: float | None = None) -> ShapeContextDescriptor:
    bins = generate_shape_context_batch(samples, [anchor], params, local_density_radius)[0]
    return ShapeContextDescriptor(bins, params)


def _normalised(x: np.ndarray) -> np.ndarray:
    flat = x.reshape(len(x), -1)
    norm = np.linalg.norm(flat, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    return (flat / safe[:, None]).reshape(x.shape)


def shape_context_distance(needle, haystack) -> float:
    """Smallest Euclidean distance over azimuth rotations of the haystack, after L2 normalisation."""
    if isinstance(needle, ShapeContextDescriptor):
        if needle.params != haystack.params:
            raise ValueError("shape context parameters differ")
        needle, haystack = needle.bins, haystack.bins
    a = np.asarray(needle, dtype=np.float64)
    b = np.asarray(haystack, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape context parameters differ")
    a, b = _normalised(a[None])[0], _normalised(b[None])[0]
    return float(min(np.linalg.norm(a - np.roll(b, s, axis=0)) for s in range(a.shape[0])))


def shape_context_distance_matrix(needles: np.ndarray, haystacks: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """All-pairs shift-minimised distance, (A, J, K, L) x (B, J, K, L) -> (A, B).

    The correlation for every azimuth shift is obtained at once through a
    real FFT along the azimuth axis; one complex matrix product per frequency.
    """
    needles = _normalised(np.asarray(needles, dtype=np.float64))
    haystacks = _normalised(np.asarray(haystacks, dtype=np.float64))
    j = needles.shape[1]
    fa = np.fft.rfft(needles.reshape(len(needles), j, -1), axis=1)  # (A, F, KL)
    na2 = np.einsum("ij,ij->i", needles.reshape(len(needles), -1), needles.reshape(len(needles), -1))
    out = np.empty((len(needles), len(haystacks)))
    for s in range(0, len(haystacks), chunk):
        hb = haystacks[s:s + chunk]
        fb = np.fft.rfft(hb.reshape(len(hb), j, -1), axis=1)  # (B, F, KL)
        nb2 = np.einsum("ij,ij->i", hb.reshape(len(hb), -1), hb.reshape(len(hb), -1))
        spec = np.empty((len(needles), len(hb), fa.shape[1]), dtype=np.complex128)
        for f in range(fa.shape[1]):
            spec[:, :, f] = np.conj(fa[:, f, :]) @ fb[:, f, :].T
        corr = np.fft.irfft(spec, n=j, axis=2)
        best = corr.max(axis=2)
        out[:, s:s + chunk] = np.sqrt(np.maximum(na2[:, None] + nb2[None, :] - 2.0 * best, 0.0))
    return out
