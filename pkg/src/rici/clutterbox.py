"""The clutterbox experiment.

A reference object and a growing number of clutter objects are placed at
random poses in a cube. Descriptors computed on the isolated reference object
are searched for among the descriptors of every unique vertex of the
cluttered scene; the position of the true correspondent in each ranked list
is accumulated into a histogram per clutter level.

All random decisions draw from independent child streams of one seed, so the
scenes do not depend on the descriptor method being evaluated.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .loaders import load_mesh
from .mesh import (OrientedPoint, PointCloud, RigidTransform, TriangleMesh, apply_transform,
                   normalize_to_unit_sphere, sample_point_cloud)
from .rici import crd_count_at_most, crd_paired, generate_rici_batch
from .rng import Prng
from .shape_context import ShapeContextParams, generate_shape_context_batch, local_density, \
    shape_context_distance_matrix
from .spin_image import generate_spin_image_batch, pearson_matrix

log = logging.getLogger(__name__)

METHODS = ("rici", "si", "3dsc")
MESH_SUFFIXES = (".obj", ".ply")


class DatasetTooSmall(ValueError):
    """Fewer loadable meshes than the largest clutter level needs."""


@dataclass(frozen=True)
class ClutterboxConfig:
    seed: int = 0
    box_side: float = 3.0
    object_counts: tuple = (1, 5, 10)
    method: str = "rici"
    support_radius: float = 0.3
    resolution: int = 64
    samples_per_triangle: int = 10
    support_angle: float | None = None
    dataset_path: str | None = None
    shape_context: ShapeContextParams = ShapeContextParams()
    clutter_samples: int = 100_000
    identity_reference: bool = False

    def __post_init__(self):
        counts = tuple(int(c) for c in self.object_counts)
        object.__setattr__(self, "object_counts", counts)
        if not counts or counts[0] != 1:
            raise ValueError("object counts must start at 1 (the reference object alone)")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("object counts must be strictly increasing")
        if not self.box_side >= 2.0:
            raise ValueError("box side must be at least 2 so a unit sphere fits")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.support_radius > 0:
            raise ValueError("support radius must be positive")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.samples_per_triangle < 1 or self.clutter_samples < 1:
            raise ValueError("sample counts must be positive")

    @property
    def shape_context_params(self) -> ShapeContextParams:
        return replace(self.shape_context, r_max=float(self.support_radius))

    def to_json(self) -> dict:
        d = asdict(self)
        d["object_counts"] = list(self.object_counts)
        d["shape_context"] = asdict(self.shape_context_params)
        return d


@dataclass
class RankHistogram:
    clutter_object_count: int
    counts: dict
    total_queries: int
    haystack_size: int

    @classmethod
    def from_ranks(cls, n_objects: int, ranks: np.ndarray, haystack_size: int) -> "RankHistogram":
        values, counts = np.unique(np.asarray(ranks, dtype=np.int64), return_counts=True)
        return cls(int(n_objects), {int(v): int(c) for v, c in zip(values, counts)},
                   int(len(ranks)), int(haystack_size))

    def fraction_at(self, rank: int = 0) -> float:
        return self.counts.get(rank, 0) / self.total_queries if self.total_queries else 0.0

    def to_json(self) -> dict:
        return {"clutterObjectCount": self.clutter_object_count, "haystackSize": self.haystack_size,
                "totalQueries": self.total_queries,
                "counts": {str(k): v for k, v in sorted(self.counts.items())}}


@dataclass(frozen=True)
class VertexClutterRecord:
    vertex_id: int
    clutter_fraction: float
    achieved_rank: int


# --------------------------------------------------------------------------
# building blocks


def unique_vertex_array(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """(U, 6) distinct (position, normal) rows by exact bit pattern, in first-occurrence order.

    Also returns the index of each row's first occurrence in the mesh.
    """
    rows = np.ascontiguousarray(np.hstack([mesh.vertices, mesh.normals]), dtype=np.float64)
    return _dedup_rows(rows)[:2]


def _dedup_rows(rows: np.ndarray):
    if not len(rows):
        return rows.reshape(0, 6), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    # adding 0.0 turns -0.0 into +0.0, so signed zeros do not split otherwise identical rows
    bits = np.ascontiguousarray(rows + 0.0).view(np.uint64)
    _, first, inverse = np.unique(bits, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    first = first[order]
    return rows[first], first, remap[inverse.ravel()]


def unique_vertices(mesh: TriangleMesh) -> list[OrientedPoint]:
    arr, _ = unique_vertex_array(mesh)
    return [OrientedPoint(a[:3], a[3:]) for a in arr]


def rank_from_distances(distances: np.ndarray, correspondence, higher_is_better: bool = False) -> np.ndarray:
    """Rank of each needle's true correspondent: the count of strictly better entries in its row.

    Ties with the correspondent share its (best) rank.
    """
    d = np.asarray(distances)
    corr = np.asarray(correspondence, dtype=np.int64)
    if d.ndim != 2 or len(corr) != d.shape[0]:
        raise ValueError("need one correspondent per distance row")
    if len(corr) and (corr.min() < 0 or corr.max() >= d.shape[1]):
        raise IndexError("correspondence index out of range")
    true = d[np.arange(len(corr)), corr]
    better = d > true[:, None] if higher_is_better else d < true[:, None]
    return better.sum(axis=1).astype(np.int64)


def rank_descriptors(method: str, reference: np.ndarray, scene: np.ndarray, correspondence) -> np.ndarray:
    """Ranks of the true correspondents of ``reference`` descriptors among ``scene`` descriptors."""
    corr = np.asarray(correspondence, dtype=np.int64)
    if method == "rici":
        d_true = crd_paired(reference, scene[corr])
        # strictly better means CRD <= d_true - 1 for integer distances
        return crd_count_at_most(reference, scene, d_true - 1)
    if method == "si":
        return rank_from_distances(pearson_matrix(reference, scene), corr, higher_is_better=True)
    if method == "3dsc":
        return rank_from_distances(shape_context_distance_matrix(reference, scene), corr)
    raise ValueError(f"unknown method {method!r}")


def clutter_fractions(cloud: PointCloud, anchors: np.ndarray, reference_object_id: int,
                      support_radius: float, volume: str = "cylinder") -> np.ndarray:
    """Fraction of the samples inside each anchor's support volume that are not on the reference object.

    ``volume`` is ``"cylinder"`` (radius R, height R, centred on the anchor
    along its normal) or ``"sphere"`` (radius R). Anchors whose volume holds
    no samples get 0.
    """
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 6)
    out = np.zeros(len(anchors))
    if not len(anchors) or not len(cloud):
        return out
    r = float(support_radius)
    if volume == "cylinder":
        reach = r * np.sqrt(1.25)
    elif volume == "sphere":
        reach = r
    else:
        raise ValueError(f"unknown support volume {volume!r}")
    tree = cKDTree(cloud.positions)
    hits = tree.query_ball_point(anchors[:, :3], r=reach)
    foreign = cloud.object_ids != reference_object_id
    for i, idx in enumerate(hits):
        if not idx:
            continue
        idx = np.asarray(idx)
        d = cloud.positions[idx] - anchors[i, :3]
        if volume == "cylinder":
            beta = d @ anchors[i, 3:]
            alpha2 = np.einsum("ij,ij->i", d, d) - beta * beta
            idx = idx[(alpha2 <= r * r) & (np.abs(beta) <= 0.5 * r)]
        if len(idx):
            out[i] = np.count_nonzero(foreign[idx]) / len(idx)
    return out


def estimate_clutter_fraction(scene, anchor: OrientedPoint, reference_object_id: int, support_radius: float,
                              mc_samples: int, rng: Prng, volume: str = "cylinder") -> float:
    """Monte-Carlo clutter fraction of one anchor from ``mc_samples`` area-weighted scene samples."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    cloud = sample_point_cloud(scene, mc_samples, rng)
    arr = np.concatenate([anchor.position, anchor.normal])[None]
    return float(clutter_fractions(cloud, arr, reference_object_id, support_radius, volume)[0])


def support_volume(method: str) -> str:
    return "sphere" if method == "3dsc" else "cylinder"


# --------------------------------------------------------------------------
# scenes


@dataclass
class PlacedObject:
    name: str
    mesh: TriangleMesh  # normalised, in its own frame
    transform: RigidTransform
    placed: TriangleMesh
    anchors: np.ndarray  # (U, 6) unique vertices in scene coordinates


@dataclass
class ClutterScene:
    """Selected objects in placement order; the reference object comes first."""

    objects: list
    reference_anchors: np.ndarray  # unique vertices of the untransformed reference
    skipped: list = field(default_factory=list)

    def level(self, n: int):
        """Scene list ``[(mesh, object_id)]``, scene anchors and reference correspondences at ``n`` objects."""
        objs = self.objects[:n]
        scene = [(o.placed, k) for k, o in enumerate(objs)]
        rows, _, inverse = _dedup_rows(np.concatenate([o.anchors for o in objs]))
        corr = inverse[:len(self.reference_anchors)]
        return scene, rows, corr

    def placement_log(self) -> list:
        return [{"object": o.name, **o.transform.to_json()} for o in self.objects]


def list_dataset(path) -> list[Path]:
    path = Path(path)
    if not path.is_dir():
        raise DatasetTooSmall(f"dataset directory {str(path)!r} does not exist")
    return sorted(p for p in path.iterdir() if p.suffix.lower() in MESH_SUFFIXES and p.is_file())


def _select_meshes(candidates: list, count: int, rng: Prng) -> tuple[list, list]:
    chosen, skipped = [], []
    for i in rng.permutation(len(candidates)):
        item = candidates[int(i)]
        in_memory = isinstance(item, TriangleMesh)
        name = f"mesh{int(i)}" if in_memory else Path(item).name
        try:
            mesh = normalize_to_unit_sphere(item if in_memory else load_mesh(item))[0]
        except (OSError, ValueError) as exc:
            log.warning("skipping unloadable mesh %s: %s", name, exc)
            skipped.append(name)
            continue
        chosen.append((name, mesh))
        if len(chosen) == count:
            return chosen, skipped
    raise DatasetTooSmall(f"need {count} loadable meshes, found {len(chosen)}")


def build_scene(config: ClutterboxConfig, meshes: list | None = None) -> ClutterScene:
    """Select, normalise and place the objects for every clutter level of ``config``.

    ``meshes`` (in-memory meshes or file paths) overrides ``config.dataset_path``.
    """
    if meshes is None:
        if config.dataset_path is None:
            raise DatasetTooSmall("no dataset given")
        meshes = list_dataset(config.dataset_path)
    root = Prng(config.seed, ("clutterbox",))
    n = config.object_counts[-1]
    chosen, skipped = _select_meshes(list(meshes), n, root.child("selection"))
    ref = int(root.child("reference").integers(n))
    order = [ref] + [int(i) for i in root.child("order").permutation([i for i in range(n) if i != ref])]
    objects = []
    for slot, idx in enumerate(order):
        name, mesh = chosen[idx]
        if slot == 0 and config.identity_reference:
            t = RigidTransform.identity()
        else:
            t = RigidTransform.random(root.child("placement", slot), 1.0, config.box_side - 1.0)
        local, _ = unique_vertex_array(mesh)
        placed_anchors = np.hstack([t.apply_points(local[:, :3]), t.apply_vectors(local[:, 3:])])
        objects.append(PlacedObject(name, mesh, t, apply_transform(mesh, t), placed_anchors))
    return ClutterScene(objects, unique_vertex_array(objects[0].mesh)[0], skipped)


# --------------------------------------------------------------------------
# running


@dataclass
class ClutterboxResult:
    config: ClutterboxConfig
    placements: list
    skipped: list
    reference_vertex_count: int
    histograms: list
    records: dict  # object count -> list[VertexClutterRecord]
    timings: list = field(default_factory=list)

    def to_json(self) -> dict:
        """Everything except timings, which vary between runs."""
        return {
            "version": __version__,
            "config": self.config.to_json(),
            "placements": self.placements,
            "skippedMeshes": self.skipped,
            "referenceVertexCount": self.reference_vertex_count,
            "histograms": [h.to_json() for h in self.histograms],
            "records": {str(n): [[r.vertex_id, r.clutter_fraction, r.achieved_rank] for r in recs]
                        for n, recs in self.records.items()},
        }


def _cloud(scene, samples_per_triangle: int, rng: Prng) -> PointCloud:
    tri_count = sum(m.triangle_count for m, _ in scene)
    return sample_point_cloud(scene, samples_per_triangle * tri_count, rng)


def _describe(config: ClutterboxConfig, mesh_scene, cloud: PointCloud | None, anchors: np.ndarray) -> np.ndarray:
    if config.method == "rici":
        return generate_rici_batch([m for m, _ in mesh_scene], anchors, config.support_radius, config.resolution)
    if config.method == "si":
        return generate_spin_image_batch(cloud, anchors, config.support_radius, config.resolution,
                                         config.support_angle)
    params = config.shape_context_params
    return generate_shape_context_batch(cloud, anchors, params, density=local_density(cloud, params.r_min))


def evaluate_scene(config: ClutterboxConfig, scene: ClutterScene) -> ClutterboxResult:
    """Run the ranking protocol for ``config.method`` over an already built scene."""
    root = Prng(config.seed, ("clutterbox",))
    ref_obj = scene.objects[0]
    ref_scene = [(ref_obj.mesh, 0)]
    timings = []

    t0 = time.perf_counter()
    ref_cloud = None if config.method == "rici" else _cloud(ref_scene, config.samples_per_triangle,
                                                            root.child("reference-cloud"))
    ref_desc = _describe(config, ref_scene, ref_cloud, scene.reference_anchors)
    timings.append({"stage": "reference", "generationSeconds": time.perf_counter() - t0,
                    "descriptors": len(ref_desc)})

    histograms, records = [], {}
    for n in config.object_counts:
        mesh_scene, anchors, corr = scene.level(n)
        t0 = time.perf_counter()
        cloud = None if config.method == "rici" else _cloud(mesh_scene, config.samples_per_triangle,
                                                            root.child("scene-cloud", n))
        scene_desc = _describe(config, mesh_scene, cloud, anchors)
        t1 = time.perf_counter()
        ranks = rank_descriptors(config.method, ref_desc, scene_desc, corr)
        t2 = time.perf_counter()
        clutter_cloud = sample_point_cloud(mesh_scene, config.clutter_samples, root.child("clutter", n))
        fractions = clutter_fractions(clutter_cloud, anchors[corr], 0, config.support_radius,
                                      support_volume(config.method))
        histograms.append(RankHistogram.from_ranks(n, ranks, len(anchors)))
        records[n] = [VertexClutterRecord(i, float(f), int(r)) for i, (f, r) in enumerate(zip(fractions, ranks))]
        timings.append({"stage": f"n={n}", "generationSeconds": t1 - t0, "comparisonSeconds": t2 - t1,
                        "descriptors": len(scene_desc), "comparisons": len(ref_desc) * len(scene_desc)})
        log.info("n=%d: %d queries, haystack %d, rank-0 fraction %.3f", n, len(ranks), len(anchors),
                 histograms[-1].fraction_at(0))

    return ClutterboxResult(config, scene.placement_log(), list(scene.skipped), len(scene.reference_anchors),
                            histograms, records, timings)


def run_clutterbox(config: ClutterboxConfig, meshes: list | None = None) -> ClutterboxResult:
    return evaluate_scene(config, build_scene(config, meshes))


def support_angle_ablation(config: ClutterboxConfig, angles, meshes: list | None = None) -> dict:
    """Spin image clutterbox runs over identical scenes, varying only the support angle."""
    if config.method != "si":
        raise ValueError("the support angle ablation applies to spin images only")
    scene = build_scene(config, meshes)
    return {float(a): evaluate_scene(replace(config, support_angle=float(a)), scene) for a in angles}


# --------------------------------------------------------------------------
# output


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_outputs(result: ClutterboxResult, directory, stem: str = "clutterbox") -> list[Path]:
    """Write ``<stem>.json``, ``<stem>_timings.json`` and per-level CSVs; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out / f"{stem}.json"
    p.write_text(dumps_json(result.to_json()), encoding="utf-8")
    paths.append(p)
    p = out / f"{stem}_timings.json"
    p.write_text(dumps_json({"timings": result.timings}), encoding="utf-8")
    paths.append(p)
    for h in result.histograms:
        n = h.clutter_object_count
        p = out / f"{stem}_ranks_n{n}.csv"
        p.write_text("rank,count\n" + "".join(f"{k},{v}\n" for k, v in sorted(h.counts.items())),
                     encoding="utf-8")
        paths.append(p)
        p = out / f"{stem}_clutter_n{n}.csv"
        p.write_text("vertexId,clutterFraction,rank\n" + "".join(
            f"{r.vertex_id},{r.clutter_fraction!r},{r.achieved_rank}\n" for r in result.records[n]),
            encoding="utf-8")
        paths.append(p)
    return paths
