import numpy as np
import pytest

from contactdyn import shapes
from contactdyn.collision import detect_proximities


def tri_surface(body, verts, tris):
    return (body, np.asarray(tris, dtype=np.int64),
            np.asarray(verts, dtype=np.float64))


def test_parallel_triangles_face_to_face():
    d = 0.01
    top = tri_surface("a", [[0, 0, d], [1, 0, d], [0, 1, d]], [[0, 2, 1]])
    bot = tri_surface("b", [[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    pairs = detect_proximities([top, bot], threshold=0.05)
    assert len(pairs) >= 3
    for p in pairs:
        assert np.isclose(p.gap, d, atol=1e-12)
        assert np.allclose(p.normal, [0, 0, 1], atol=1e-9)


def test_vertex_above_large_triangle():
    h = 0.02
    apex = tri_surface(
        "a", [[0.2, 0.2, h], [0.3, 0.25, 0.4], [0.25, 0.35, 0.4]], [[0, 1, 2]]
    )
    floor = tri_surface("b", [[-3, -3, 0], [3, -3, 0], [0, 3, 0]], [[0, 1, 2]])
    pairs = detect_proximities([apex, floor], threshold=0.05)
    assert len(pairs) == 1
    p = pairs[0]
    assert p.kind == "vertex_face"
    assert np.allclose(p.point_p, [0.2, 0.2, h])
    assert np.allclose(p.point_q, [0.2, 0.2, 0.0], atol=1e-12)
    assert np.allclose(p.normal, [0, 0, 1], atol=1e-9)
    assert np.isclose(p.gap, h)


def test_crossing_edges_against_sampled_oracle():
    d = 0.004
    # edge 1 along x at z=d, edge 2 along y at z=0, crossing over the origin
    sa = tri_surface("a", [[-0.5, 0, d], [0.5, 0, d], [0, 0.02, d + 0.5]],
                     [[0, 1, 2]])
    sb = tri_surface("b", [[0, -0.5, 0], [0, 0.5, 0], [0.02, 0, -0.5]],
                     [[0, 1, 2]])
    pairs = detect_proximities([sa, sb], threshold=0.05)
    ee = [p for p in pairs if p.kind == "edge_edge"]
    assert len(ee) == 1
    p = ee[0]
    # oracle: dense parameter grid over both segments
    ts = np.linspace(0, 1, 2001)
    pa = np.array([-0.5, 0, d]) + np.outer(ts, [1.0, 0, 0])
    pb = np.array([0, -0.5, 0]) + np.outer(ts, [0, 1.0, 0])
    dists = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    assert abs(p.gap - dists.min()) < 1e-6
    assert np.isclose(p.gap, d, atol=1e-9)


def test_swap_symmetry():
    box = shapes.box_mesh(size=(0.1, 0.1, 0.1), divisions=(1, 1, 1))
    up = box.vertices + np.array([0.03, 0.02, 0.105])
    sa = ("a", box.surface_tris, up)
    sb = ("b", box.surface_tris, box.vertices)
    fwd = detect_proximities([sa, sb], threshold=0.02)
    rev = detect_proximities([sb, sa], threshold=0.02)
    assert len(fwd) == len(rev)
    fwd_keys = sorted(
        (tuple(np.round(p.point_p, 9)), tuple(np.round(p.point_q, 9)),
         tuple(np.round(p.normal, 6)))
        for p in fwd
    )
    rev_keys = sorted(
        (tuple(np.round(p.point_q, 9)), tuple(np.round(p.point_p, 9)),
         tuple(np.round(-p.normal, 6)))
        for p in rev
    )
    assert fwd_keys == rev_keys


def test_no_pair_beyond_threshold_and_completeness():
    rng = np.random.default_rng(11)
    box = shapes.box_mesh(size=(0.08, 0.08, 0.08), divisions=(1, 1, 1))
    threshold = 0.01
    offset = np.array([0.02, 0.01, 0.08 + 0.004])
    sa = ("a", box.surface_tris, box.vertices + offset)
    sb = ("b", box.surface_tris, box.vertices)
    pairs = detect_proximities([sa, sb], threshold=threshold)
    assert pairs, "expected proximity pairs for nearly touching boxes"
    for p in pairs:
        assert p.gap < threshold
    # completeness oracle: brute-force closest distance per triangle pair
    pos_a = box.vertices + offset
    pos_b = box.vertices
    u = np.linspace(0, 1, 12)
    grid = np.array([(a, b) for a in u for b in u if a + b <= 1.0])
    w = np.column_stack([1 - grid.sum(axis=1), grid])
    for ta in range(len(box.surface_tris)):
        pa = w @ pos_a[box.surface_tris[ta]]
        for tb in range(len(box.surface_tris)):
            pb = w @ pos_b[box.surface_tris[tb]]
            d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
            dmin = np.sqrt(d2.min())
            if dmin < threshold / 2:
                near = [
                    p for p in pairs
                    if min(np.linalg.norm(p.point_p - x) for x in pa) < threshold
                    and p.gap <= dmin + threshold / 2
                ]
                assert near, (ta, tb, dmin)


def test_translation_invariance():
    box = shapes.box_mesh(size=(0.05, 0.05, 0.05), divisions=(1, 1, 1))
    up = box.vertices + np.array([0.01, 0.0, 0.053])
    shift = np.array([1.2345, -0.5432, 0.777])
    ref = detect_proximities(
        [("a", box.surface_tris, up), ("b", box.surface_tris, box.vertices)],
        threshold=0.01,
    )
    moved = detect_proximities(
        [("a", box.surface_tris, up + shift),
         ("b", box.surface_tris, box.vertices + shift)],
        threshold=0.01,
    )
    assert len(ref) == len(moved)
    for p, q in zip(ref, moved):
        assert abs(p.gap - q.gap) < 1e-9
        assert np.allclose(p.normal, q.normal, atol=1e-9)


def test_penetrating_pair_kept_with_negative_gap():
    apex = tri_surface(
        "a", [[0.0, 0.0, -0.005], [0.1, 0.0, 0.2], [0.0, 0.1, 0.2]], [[0, 1, 2]]
    )
    floor = tri_surface("b", [[-3, -3, 0], [3, -3, 0], [0, 3, 0]], [[0, 1, 2]])
    pairs = detect_proximities([apex, floor], threshold=0.02)
    below = [p for p in pairs if p.gap < 0]
    assert below
    p = below[0]
    assert np.allclose(p.normal, [0, 0, 1], atol=1e-9)
    assert np.isclose(p.gap, -0.005, atol=1e-9)


def test_duplicate_suppression_near_coincident():
    # vertex of A sits over the shared edge of two floor triangles: the
    # projections coincide, so only one pair may survive
    apex = tri_surface(
        "a", [[0.0, 0.0, 0.01], [0.05, 0.0, 0.3], [0.0, 0.05, 0.3]], [[0, 1, 2]]
    )
    floor = tri_surface(
        "b",
        [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]],
        [[0, 1, 2], [0, 2, 3]],
    )
    pairs = detect_proximities([apex, floor], threshold=0.05)
    assert len(pairs) == 1


def test_empty_and_threshold_validation():
    box = shapes.box_mesh(divisions=(1, 1, 1))
    far = box.vertices + np.array([0, 0, 10.0])
    pairs = detect_proximities(
        [("a", box.surface_tris, far), ("b", box.surface_tris, box.vertices)],
        threshold=0.01,
    )
    assert pairs == []
    with pytest.raises(ValueError):
        detect_proximities([], threshold=0.0)


def test_cap_thins_evenly():
    table = shapes.table_mesh()
    floor = shapes.floor_mesh()
    lift = table.vertices + np.array([0, 0, 0.001])
    surfaces = [("table", table.surface_tris, lift),
                ("floor", floor.surface_tris, floor.vertices)]
    full = detect_proximities(surfaces, threshold=0.005)
    capped = detect_proximities(surfaces, threshold=0.005, cap=8)
    assert len(capped) == 8
    assert len(full) > 8
    # all four legs still represented
    legs = {(p.point_p[0] > 0, p.point_p[1] > 0) for p in capped}
    assert len(legs) == 4
