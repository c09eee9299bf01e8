import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mesh_from
from oracles import sorted_rank
from rici.clutterbox import (ClutterboxConfig, DatasetTooSmall, RankHistogram, build_scene, clutter_fractions,
                             estimate_clutter_fraction, evaluate_scene, list_dataset, rank_descriptors,
                             rank_from_distances, run_clutterbox, support_angle_ablation, unique_vertices,
                             write_outputs)
from rici.corpus import generate_mesh
from rici.mesh import OrientedPoint, TriangleMesh, normalize_to_unit_sphere
from rici.rici import crd_matrix
from rici.rng import Prng

CUBE_V = np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)], float)
CUBE_T = np.array([(0, 3, 2), (0, 2, 1), (4, 5, 6), (4, 6, 7), (0, 1, 5), (0, 5, 4), (1, 2, 6), (1, 6, 5),
                   (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7)])


def small_config(**kw):
    base = dict(seed=3, object_counts=(1, 3, 5), resolution=16, samples_per_triangle=4, clutter_samples=5000)
    base.update(kw)
    return ClutterboxConfig(**base)


# -- configuration ----------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(object_counts=(2, 5)), dict(object_counts=(1, 5, 5)), dict(object_counts=()),
                                dict(box_side=1.5), dict(method="fpfh"), dict(support_radius=0),
                                dict(resolution=1), dict(clutter_samples=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ClutterboxConfig(**kw)


def test_defaults_follow_the_published_setup():
    c = ClutterboxConfig()
    assert (c.box_side, c.object_counts, c.support_radius, c.resolution, c.samples_per_triangle) == \
        (3.0, (1, 5, 10), 0.3, 64, 10)
    assert c.shape_context_params.shape == (15, 11, 12) and c.shape_context_params.r_min == 0.048


# -- ranking ----------------------------------------------------------------

def test_rank_tie_rule():
    # nothing is strictly closer than 2, and both tied entries share the best rank
    assert rank_from_distances(np.array([[5, 2, 2, 9]]), [1]).tolist() == [0]
    assert rank_from_distances(np.array([[5, 2, 2, 9]]), [2]).tolist() == [0]
    assert rank_from_distances(np.array([[5, 2, 2, 9]]), [0]).tolist() == [2]
    assert rank_from_distances(np.array([[5, 2, 2, 9]]), [3]).tolist() == [3]


def test_rank_strictly_best_is_zero():
    assert rank_from_distances(np.array([[5, 1, 2, 9]]), [1]).tolist() == [0]
    assert rank_from_distances(np.array([[0.1, 0.9, 0.3]]), [1], higher_is_better=True).tolist() == [0]


def test_rank_input_checks():
    with pytest.raises(IndexError):
        rank_from_distances(np.zeros((1, 3)), [3])
    with pytest.raises(ValueError):
        rank_from_distances(np.zeros((2, 3)), [0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_rank_matches_sort_oracle(seed, higher):
    g = np.random.default_rng(seed)
    d = g.integers(0, 6, size=(7, 12)).astype(float)
    corr = g.integers(0, 12, size=7)
    got = rank_from_distances(d, corr, higher_is_better=higher)
    assert got.tolist() == [sorted_rank(d[i], corr[i], higher) for i in range(7)]


def test_rici_early_exit_ranking_matches_full_matrix():
    g = np.random.default_rng(1)
    ref = g.integers(0, 3, (20, 16, 16)).astype(np.int32)
    scene = np.concatenate([ref, g.integers(0, 3, (40, 16, 16)).astype(np.int32)])
    scene[25] = ref[0]  # a tie with the true match
    corr = np.arange(20)
    full = rank_from_distances(crd_matrix(ref, scene), corr)
    assert np.array_equal(rank_descriptors("rici", ref, scene, corr), full)
    assert full[0] == 0


def test_histogram_mass_and_range():
    h = RankHistogram.from_ranks(5, np.array([0, 0, 3, 1, 0]), 10)
    assert sum(h.counts.values()) == h.total_queries == 5
    assert h.fraction_at(0) == 0.6
    assert json.loads(json.dumps(h.to_json()))["counts"] == {"0": 3, "1": 1, "3": 1}


# -- unique vertices --------------------------------------------------------

def test_unique_vertices_indexed_cube():
    m = mesh_from(CUBE_V, CUBE_T)
    assert len(unique_vertices(m)) == 8


def test_unique_vertices_soup_cube():
    corners = CUBE_V[CUBE_T].reshape(-1, 3)
    tris = np.arange(36).reshape(-1, 3)
    c = corners[tris]
    fn = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    fn = np.repeat(fn / np.linalg.norm(fn, axis=1, keepdims=True), 3, axis=0)
    m = TriangleMesh(corners, fn, tris)
    u = unique_vertices(m)
    # every cube corner touches three faces, each with its own normal
    distinct = {(tuple(p), tuple(n)) for p, n in zip(corners.tolist(), fn.tolist())}
    assert len(u) == len(distinct) == 24


def test_unique_vertices_signed_zero_is_one_vertex():
    v = np.array([(0.0, 0, 0), (-0.0, 0, 0), (1, 0, 0), (0, 1, 0)])
    m = TriangleMesh(v, np.tile([0, 0, 1.0], (4, 1)), [(0, 2, 3), (1, 2, 3)])
    assert len(unique_vertices(m)) == 3


def test_unique_vertices_identity_without_duplicates():
    m = generate_mesh(0, 1)
    u = unique_vertices(m)
    assert len(u) == m.vertex_count
    assert np.array_equal(np.array([p.position for p in u]), m.vertices)


# -- clutter estimator ------------------------------------------------------

def _blob():
    return normalize_to_unit_sphere(generate_mesh(4, 0))[0]


def test_clutter_reference_only_is_zero():
    m = _blob()
    a = OrientedPoint(m.vertices[0], m.normals[0])
    assert estimate_clutter_fraction([(m, 0)], a, 0, 0.3, 10_000, Prng(1)) == 0.0


def test_clutter_coincident_duplicate_is_half():
    m = _blob()
    a = OrientedPoint(m.vertices[0], m.normals[0])
    for volume in ("cylinder", "sphere"):
        f = estimate_clutter_fraction([(m, 0), (m, 1)], a, 0, 0.3, 100_000, Prng(2), volume)
        assert abs(f - 0.5) <= 0.02


def test_clutter_far_away_is_zero():
    m = _blob()
    far = TriangleMesh(m.vertices + 10.0, m.normals, m.triangles)
    a = OrientedPoint(m.vertices[0], m.normals[0])
    assert estimate_clutter_fraction([(m, 0), (far, 1)], a, 0, 0.3, 20_000, Prng(3)) == 0.0


def test_clutter_empty_volume_and_bad_volume():
    m = _blob()
    from rici.mesh import sample_point_cloud
    cloud = sample_point_cloud([(m, 0)], 100, Prng(0))
    assert clutter_fractions(cloud, np.array([[50, 50, 50, 0, 0, 1.0]]), 0, 0.3).tolist() == [0.0]
    with pytest.raises(ValueError):
        clutter_fractions(cloud, np.zeros((1, 6)), 0, 0.3, volume="cube")
    with pytest.raises(ValueError):
        estimate_clutter_fraction([(m, 0)], OrientedPoint((0, 0, 0), (0, 0, 1)), 0, 0.3, 0, Prng(0))


def test_clutter_standard_error_shrinks_with_samples():
    m = _blob()
    shifted = TriangleMesh(m.vertices + [0.05, 0.0, 0.0], m.normals, m.triangles)
    a = OrientedPoint(m.vertices[0], m.normals[0])
    scene = [(m, 0), (shifted, 1)]

    def spread(samples):
        est = [estimate_clutter_fraction(scene, a, 0, 0.3, samples, Prng(9, ("rep", samples, k)))
               for k in range(300)]
        return np.std(est)

    ratio = spread(4000) / spread(8000)
    # doubling the sample count divides the standard error by sqrt(2)
    assert 1.15 <= ratio <= 1.75


def test_clutter_fraction_matches_brute_force_cylinder():
    g = np.random.default_rng(0)
    from rici.mesh import PointCloud
    p = g.uniform(-0.4, 0.4, size=(4000, 3))
    ids = g.integers(0, 3, 4000)
    cloud = PointCloud(p, np.tile([0, 0, 1.0], (4000, 1)), ids)
    n = np.array([0.6, 0.0, 0.8])
    got = clutter_fractions(cloud, np.concatenate([[0.01, 0.02, 0.0], n])[None], 0, 0.3)[0]
    d = p - [0.01, 0.02, 0.0]
    beta = d @ n
    alpha = np.linalg.norm(d - beta[:, None] * n, axis=1)
    inside = (alpha <= 0.3) & (np.abs(beta) <= 0.15)
    assert got == pytest.approx(np.mean(ids[inside] != 0))


# -- scenes and runs --------------------------------------------------------

def test_dataset_too_small(small_meshes):
    with pytest.raises(DatasetTooSmall):
        build_scene(small_config(object_counts=(1, 20)), small_meshes)
    with pytest.raises(DatasetTooSmall):
        build_scene(small_config())
    with pytest.raises(DatasetTooSmall):
        list_dataset("/nonexistent/dir")


def test_unloadable_meshes_are_skipped(tmp_path, small_meshes):
    from rici.loaders import write_obj
    for i, m in enumerate(small_meshes[:6]):
        write_obj(m, tmp_path / f"m{i}.obj")
    (tmp_path / "broken.obj").write_text("v 1 2\nf 1 2 3\n")
    (tmp_path / "readme.txt").write_text("not a mesh")
    scene = build_scene(small_config(dataset_path=str(tmp_path), object_counts=(1, 6)))
    assert scene.skipped == ["broken.obj"]
    assert len(scene.objects) == 6


def test_placements_inside_box(small_meshes):
    scene = build_scene(small_config(), small_meshes)
    for o in scene.objects:
        assert np.all(np.linalg.norm(o.placed.vertices - o.transform.translation, axis=1) <= 1 + 1e-9)
        assert np.all((o.transform.translation >= 1) & (o.transform.translation <= 2))


def test_scenes_grow_incrementally(small_meshes):
    scene = build_scene(small_config(), small_meshes)
    prev = None
    for n in (1, 3, 5):
        parts, anchors, corr = scene.level(n)
        assert len(parts) == n
        if prev is not None:
            assert all(a[0] is b[0] for a, b in zip(prev[0], parts))
            assert np.array_equal(anchors[:len(prev[1])], prev[1])
            assert np.array_equal(corr, prev[2])
        prev = (parts, anchors, corr)


def test_identical_scenes_across_methods(small_meshes):
    a = build_scene(small_config(method="rici"), small_meshes)
    b = build_scene(small_config(method="si"), small_meshes)
    assert a.placement_log() == b.placement_log()


def test_identity_reference_self_match(small_meshes):
    cfg = small_config(object_counts=(1,), identity_reference=True, resolution=32)
    r = run_clutterbox(cfg, small_meshes)
    h = r.histograms[0]
    assert h.counts == {0: r.reference_vertex_count}
    assert all(rec.clutter_fraction == 0.0 for rec in r.records[1])


def test_run_is_deterministic_and_serialisable(tmp_path, small_meshes):
    cfg = small_config()
    a = run_clutterbox(cfg, small_meshes)
    b = run_clutterbox(cfg, small_meshes)
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)
    assert [h.clutter_object_count for h in a.histograms] == [1, 3, 5]
    for h in a.histograms:
        assert sum(h.counts.values()) == h.total_queries == a.reference_vertex_count
        assert max(h.counts) < h.haystack_size
    sizes = [h.haystack_size for h in a.histograms]
    assert sizes == sorted(sizes) and sizes[0] < sizes[-1]
    paths = write_outputs(a, tmp_path)
    names = sorted(p.name for p in paths)
    assert "clutterbox.json" in names and "clutterbox_ranks_n5.csv" in names and "clutterbox_clutter_n3.csv" in names
    assert (tmp_path / "clutterbox_ranks_n1.csv").read_text().startswith("rank,count\n")


@pytest.mark.parametrize("method", ["si", "3dsc"])
def test_other_methods_run(method, small_meshes):
    r = run_clutterbox(small_config(method=method, object_counts=(1, 3)), small_meshes)
    assert [sum(h.counts.values()) for h in r.histograms] == [r.reference_vertex_count] * 2


def test_support_angle_ablation_shares_scenes(small_meshes):
    cfg = small_config(method="si", object_counts=(1, 3))
    res = support_angle_ablation(cfg, [60, 180], small_meshes)
    assert set(res) == {60.0, 180.0}
    assert res[60.0].placements == res[180.0].placements
    baseline = run_clutterbox(cfg, small_meshes)
    assert [h.counts for h in res[180.0].histograms] == [h.counts for h in baseline.histograms]
    with pytest.raises(ValueError):
        support_angle_ablation(replace(cfg, method="rici"), [60], small_meshes)


def test_zero_support_angle_empties_images(small_meshes):
    from rici.mesh import sample_point_cloud
    from rici.spin_image import generate_spin_image_batch
    m = small_meshes[0]
    cloud = sample_point_cloud([(m, 0)], 10 * m.triangle_count, Prng(0))
    anchors = np.hstack([m.vertices, m.normals])
    full = generate_spin_image_batch(cloud, anchors, 0.3, 16)
    none = generate_spin_image_batch(cloud, anchors, 0.3, 16, support_angle_degrees=0)
    # only samples whose face normal equals the vertex normal exactly survive
    assert none.sum() <= 1e-3 * full.sum()
