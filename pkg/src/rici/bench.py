"""Micro-benchmarks: descriptor generation rates and distance evaluation rates.

Timings cover kernel compute only. Every kernel is run once on a tiny input
first so that JIT compilation is not measured.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .clutterbox import ClutterboxConfig, ClutterScene, build_scene
from .corpus import generate_mesh
from .mesh import sample_point_cloud
from .rici import crd_count_at_most, crd_matrix, crd_paired, generate_rici_batch
from .rng import Prng
from .shape_context import ShapeContextParams, generate_shape_context_batch, local_density, \
    shape_context_distance_matrix
from .spin_image import generate_spin_image_batch, pearson_matrix


@dataclass
class GenerationRow:
    method: str
    triangles: int
    descriptors: int
    seconds: float
    sampling_seconds: float

    @property
    def rate(self) -> float:
        return self.descriptors / self.seconds if self.seconds > 0 else float("inf")


@dataclass
class MatchingRow:
    method: str
    needles: int
    haystacks: int
    seconds: float

    @property
    def rate(self) -> float:
        return self.needles * self.haystacks / self.seconds if self.seconds > 0 else float("inf")


def bench_scene(seed: int, counts=(1, 2, 5, 10), meshes: list | None = None) -> ClutterScene:
    """A clutterbox scene from the procedural corpus (or ``meshes``)."""
    if meshes is None:
        meshes = [generate_mesh(seed, i) for i in range(max(counts))]
    return build_scene(ClutterboxConfig(seed=seed, object_counts=tuple(counts)), meshes)


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _best(repeats: int, fn, *args, **kwargs) -> float:
    return min(_timed(fn, *args, **kwargs)[1] for _ in range(max(1, repeats)))


def _warm_up(scene: ClutterScene, params: ShapeContextParams):
    mesh_scene, anchors, _ = scene.level(1)
    cloud = sample_point_cloud(mesh_scene, 1000, Prng(0))
    a = anchors[:2]
    r = generate_rici_batch([m for m, _ in mesh_scene], a)
    s = generate_spin_image_batch(cloud, a)
    c = generate_shape_context_batch(cloud, a, params)
    crd_matrix(r, r)
    crd_count_at_most(r, r, np.zeros(len(r), dtype=np.int64))
    crd_paired(r, r)
    pearson_matrix(s, s)
    shape_context_distance_matrix(c, c)


def bench_generation(seed: int = 0, counts=(1, 2, 5, 10), anchors: int = 256, samples_per_triangle: int = 10,
                     support_radius: float = 0.3, resolution: int = 64, meshes: list | None = None,
                     methods=("rici", "si", "3dsc"), repeats: int = 3) -> list[GenerationRow]:
    """Descriptors per second against scene triangle count, on the same seeded scenes for every method.

    Each generation time is the best of ``repeats`` runs.
    """
    scene = bench_scene(seed, counts, meshes)
    params = ShapeContextParams(r_max=support_radius)
    _warm_up(scene, params)
    rows = []
    for n in counts:
        mesh_scene, all_anchors, _ = scene.level(n)
        pick = Prng(seed, ("bench", "anchors", n)).choice(len(all_anchors), size=min(anchors, len(all_anchors)),
                                                          replace=False)
        a = all_anchors[np.sort(pick)]
        tris = sum(m.triangle_count for m, _ in mesh_scene)
        if "rici" in methods:
            dt = _best(repeats, generate_rici_batch, [m for m, _ in mesh_scene], a, support_radius, resolution)
            rows.append(GenerationRow("rici", tris, len(a), dt, 0.0))
        if "si" in methods or "3dsc" in methods:
            cloud, dt_sample = _timed(sample_point_cloud, mesh_scene, samples_per_triangle * tris,
                                      Prng(seed, ("bench", "cloud", n)))
            if "si" in methods:
                dt = _best(repeats, generate_spin_image_batch, cloud, a, support_radius, resolution)
                rows.append(GenerationRow("si", tris, len(a), dt, dt_sample))
            if "3dsc" in methods:
                density = local_density(cloud, params.r_min)
                dt_density = _best(repeats, local_density, cloud, params.r_min)
                dt = _best(repeats, generate_shape_context_batch, cloud, a, params, density=density)
                rows.append(GenerationRow("3dsc", tris, len(a), dt + dt_density, dt_sample))
    return rows


def bench_matching(seed: int = 0, objects: int = 5, needles: int | None = None, repeats: int = 1,
                   meshes: list | None = None, methods=("rici", "si", "3dsc")) -> list[MatchingRow]:
    """Distance evaluations per second for reference descriptors against a cluttered scene.

    ``crd-early`` counts, per needle, the haystacks at or below a threshold
    precomputed from the true correspondent, stopping each evaluation as
    soon as the partial sum exceeds it (the ranking workload); ``crd``
    evaluates every distance in full.
    """
    counts = (1, objects) if objects > 1 else (1,)
    scene = bench_scene(seed, counts, meshes)
    params = ShapeContextParams()
    _warm_up(scene, params)
    ref = scene.objects[0]
    mesh_scene, anchors, corr = scene.level(objects)
    ref_anchors = scene.reference_anchors
    if needles is not None and needles < len(ref_anchors):
        ref_anchors, corr = ref_anchors[:needles], corr[:needles]
    rows = []

    def best_of(fn, *args):
        return min(_timed(fn, *args)[1] for _ in range(repeats))

    if "rici" in methods:
        ref_desc = generate_rici_batch(ref.mesh, ref_anchors)
        hay = generate_rici_batch([m for m, _ in mesh_scene], anchors)
        thresholds = crd_paired(ref_desc, hay[corr]) - 1
        rows.append(MatchingRow("crd", len(ref_desc), len(hay), best_of(crd_matrix, ref_desc, hay)))
        rows.append(MatchingRow("crd-early", len(ref_desc), len(hay),
                                best_of(crd_count_at_most, ref_desc, hay, thresholds)))
    if "si" in methods or "3dsc" in methods:
        tris = sum(m.triangle_count for m, _ in mesh_scene)
        cloud = sample_point_cloud(mesh_scene, 10 * tris, Prng(seed, ("bench", "match-cloud")))
        ref_cloud = sample_point_cloud([(ref.mesh, 0)], 10 * ref.mesh.triangle_count,
                                       Prng(seed, ("bench", "match-ref-cloud")))
        if "si" in methods:
            a = generate_spin_image_batch(ref_cloud, ref_anchors)
            b = generate_spin_image_batch(cloud, anchors)
            rows.append(MatchingRow("pearson", len(a), len(b), best_of(pearson_matrix, a, b)))
        if "3dsc" in methods:
            a = generate_shape_context_batch(ref_cloud, ref_anchors, params)
            b = generate_shape_context_batch(cloud, anchors, params)
            rows.append(MatchingRow("3dsc", len(a), len(b), best_of(shape_context_distance_matrix, a, b)))
    return rows


def rows_csv(rows) -> str:
    """CSV text with the dataclass fields plus a ``rate`` column."""
    buf = io.StringIO()
    w = None
    for r in rows:
        d = asdict(r)
        d["rate"] = r.rate
        if w is None:
            w = csv.DictWriter(buf, fieldnames=list(d), lineterminator="\n")
            w.writeheader()
        w.writerow(d)
    return buf.getvalue()


def write_rows(path, rows) -> Path:
    path = Path(path)
    path.write_text(rows_csv(rows), encoding="utf-8")
    return path
