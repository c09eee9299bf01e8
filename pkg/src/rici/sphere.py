"""Exact minimal enclosing sphere of a point set (move-to-front Welzl)."""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

_REL_EPS = 1e-12


def _ball_through(support: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Smallest sphere with every support point on its boundary."""
    k = len(support)
    if k == 0:
        return np.zeros(3), -1.0
    p0 = support[0]
    if k == 1:
        return p0.copy(), 0.0
    # Center = p0 + A^T x, where the rows of A span the affine hull of the support.
    a = np.array([p - p0 for p in support[1:]])
    gram = a @ a.T
    rhs = 0.5 * np.einsum("ij,ij->i", a, a)
    try:
        x = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    center = p0 + a.T @ x
    radius_sq = max(float(np.sum((support[i] - center) ** 2)) for i in range(k))
    return center, radius_sq


def _inside(p: np.ndarray, center: np.ndarray, radius_sq: float, scale_sq: float) -> bool:
    return float(np.sum((p - center) ** 2)) <= radius_sq + _REL_EPS * scale_sq


def _mtf(points: list[np.ndarray], end: int, support: list[np.ndarray], scale_sq: float):
    center, radius_sq = _ball_through(support)
    if len(support) == 4:
        return center, radius_sq
    i = 0
    while i < end:
        p = points[i]
        if radius_sq < 0 or not _inside(p, center, radius_sq, scale_sq):
            center, radius_sq = _mtf(points, i, support + [p], scale_sq)
            points.insert(0, points.pop(i))
        i += 1
    return center, radius_sq


def minimal_enclosing_sphere(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Return ``(center, radius)`` of the smallest sphere containing ``points``.

    Only convex hull vertices can lie on the optimal sphere, so the hull is
    extracted first to keep the Python-level recursion short.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 3), axis=0)
    if len(pts) == 0:
        raise ValueError("cannot bound an empty point set")
    if len(pts) > 4:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # flat or collinear set; fall back to all points
    # Fixed shuffle keeps the expected linear running time and the result deterministic.
    order = np.random.default_rng(0x5EED).permutation(len(pts))
    plist = [pts[i] for i in order]
    extent = pts.max(axis=0) - pts.min(axis=0)
    scale_sq = float(extent @ extent) or 1.0
    center, radius_sq = _mtf(plist, len(plist), [], scale_sq)
    # Guard against round-off in the support-set solve.
    radius = float(np.sqrt(np.max(np.sum((pts - center) ** 2, axis=1))))
    return center, radius
