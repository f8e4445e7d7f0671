import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from hullodom.core import PoseDelta2D
from hullodom.hullgeom import (ConvexHull2D, DegenerateHullError, SimilarityWeights, convex_hull_2d,
                               hausdorff, intersect_convex, intersection_area, point_in_convex,
                               points_in_convex, polygon_area, polygon_centroid, similarity,
                               simplify_hull, turning_distance, turning_distance_l1,
                               turning_function)

UNIT_SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]

seeds = st.integers(0, 2 ** 32 - 1)


def hull_from_seed(seed, **kw):
    return convex_hull_2d(oracles.random_hull_points(np.random.default_rng(seed), **kw))


# -- convex hull ---------------------------------------------------------------

def test_hull_drops_interior_point():
    h = convex_hull_2d(UNIT_SQUARE + [(0.5, 0.5)])
    assert len(h) == 4 and h.area == pytest.approx(1.0)


def test_hull_of_triangle_is_ccw():
    h = convex_hull_2d([(0, 0), (0, 1), (1, 0)])
    assert len(h) == 3 and h.is_strictly_convex()


def test_hull_drops_collinear_boundary_points():
    h = convex_hull_2d([(0, 0), (1, 0), (2, 0), (2, 2), (0, 2)])
    assert len(h) == 4


@pytest.mark.parametrize("pts", [[(0, 0), (1, 1)], [(0, 0), (1, 1), (2, 2)], [(1, 1)] * 5])
def test_degenerate_hulls(pts):
    with pytest.raises(DegenerateHullError):
        convex_hull_2d(pts)


def test_reference_vertex_is_nearest_the_origin():
    h = convex_hull_2d([(5, 5), (6, 5), (6, 6), (5, 6)])
    np.testing.assert_array_equal(h.vertices[h.reference_index], (5, 5))
    h = convex_hull_2d([(5, 5), (6, 5), (6, 6), (5, 6)], origin=(10, 10))
    np.testing.assert_array_equal(h.vertices[h.reference_index], (6, 6))


def test_reference_tie_takes_first_ccw_vertex():
    h = convex_hull_2d([(-1, -1), (1, -1), (1, 1), (-1, 1)])
    assert h.reference_index == 0


@given(seeds)
def test_hull_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.random(100)) * 5
    phi = rng.uniform(0, 2 * np.pi, 100)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    h = convex_hull_2d(pts)
    assert {tuple(v) for v in h.vertices} == oracles.brute_hull_vertices(pts)
    assert points_in_convex(pts, h).all()
    assert h.is_strictly_convex()


def test_simplify_hull_removes_noise_vertices():
    noisy = [(0, 0), (1, -0.01), (2, 0), (2, 1), (1, 1.02), (0, 1)]
    h = simplify_hull(convex_hull_2d(noisy), 0.05)
    assert len(h) == 4
    assert len(simplify_hull(convex_hull_2d(noisy), 0.0)) == 6


def test_simplify_keeps_a_triangle():
    h = simplify_hull(convex_hull_2d([(0, 0), (1, 0), (0, 1)]), 10.0)
    assert len(h) == 3


# -- area and containment --------------------------------------------------------

def test_area_examples():
    assert polygon_area(convex_hull_2d(UNIT_SQUARE)) == 1.0
    assert polygon_area(convex_hull_2d([(0, 0), (2, 0), (0, 2)])) == 2.0
    hexagon = [(math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)) for k in range(6)]
    assert polygon_area(convex_hull_2d(hexagon)) == pytest.approx(3 * math.sqrt(3) / 2, abs=1e-12)


@given(seeds)
def test_area_equals_fan_sum_from_interior_point(seed):
    h = hull_from_seed(seed)
    w = np.random.default_rng(seed).dirichlet(np.ones(len(h)))
    inner = w @ h.vertices
    assert oracles.fan_area(h.vertices, inner) == pytest.approx(h.area, rel=1e-12)


@given(seeds)
def test_centroid_matches_fan_decomposition(seed):
    h = hull_from_seed(seed)
    np.testing.assert_allclose(polygon_centroid(h.vertices), oracles.fan_centroid(h.vertices),
                               rtol=1e-9, atol=1e-9)


def test_point_in_convex_examples():
    h = hull_from_seed(3)
    assert point_in_convex(h.centroid, h)
    assert all(point_in_convex(v, h) for v in h.vertices)
    far = h.centroid + 2 * np.max(np.linalg.norm(h.vertices - h.centroid, axis=1)) * np.array([1, 0])
    assert not point_in_convex(far, h)


@given(seeds)
def test_point_in_convex_agrees_with_half_plane_signs(seed):
    rng = np.random.default_rng(seed)
    h = hull_from_seed(seed)
    pts = h.centroid + rng.normal(0, 5, (50, 2))
    v, vn = h.vertices, np.roll(h.vertices, -1, axis=0)
    cross = ((vn - v)[None, :, 0] * (pts[:, None, 1] - v[None, :, 1])
             - (vn - v)[None, :, 1] * (pts[:, None, 0] - v[None, :, 0]))
    # skip points within round-off of an edge
    clear = np.abs(cross).min(axis=1) > 1e-6
    inside = (cross >= 0).all(axis=1)
    np.testing.assert_array_equal(points_in_convex(pts, h)[clear], inside[clear])


# -- turning function ------------------------------------------------------------

def test_turning_function_of_unit_square():
    tf = turning_function(convex_hull_2d(UNIT_SQUARE))
    np.testing.assert_allclose(tf.s, [0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(tf.angle, [np.pi / 2, np.pi, 3 * np.pi / 2, 2 * np.pi])


def test_turning_function_of_equilateral_triangle():
    tri = [(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)]
    tf = turning_function(convex_hull_2d(tri))
    np.testing.assert_allclose(tf.s, [0, 1 / 3, 2 / 3])
    np.testing.assert_allclose(tf.angle, [2 * np.pi / 3, 4 * np.pi / 3, 2 * np.pi])


def test_square_vs_triangle_distance():
    sq = turning_function(convex_hull_2d(UNIT_SQUARE))
    tri = turning_function(convex_hull_2d([(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)]))
    # square: (pi/2 + pi + 3pi/2 + 2pi) / 4 = 5pi/4; triangle: (2pi/3)(1+2+3)/3 = 4pi/3
    assert turning_distance(sq, tri) == pytest.approx(abs(5 * np.pi / 4 - 4 * np.pi / 3), abs=1e-12)
    ref = abs(oracles.riemann_sum_sampled(sq.s, sq.angle) - oracles.riemann_sum_sampled(tri.s, tri.angle))
    assert turning_distance(sq, tri) == pytest.approx(ref, abs=1e-6)


@given(seeds)
def test_turning_function_matches_heading_oracle(seed):
    h = hull_from_seed(seed)
    tf = turning_function(h)
    s, v = oracles.turning_steps(h.vertices)
    np.testing.assert_allclose(tf.s, s, atol=1e-12)
    np.testing.assert_allclose(tf.angle, v, atol=1e-9)


@given(seeds, seeds)
def test_turning_distance_within_riemann_sampling_bound(s1, s2):
    a, b = hull_from_seed(s1), hull_from_seed(s2)
    fa, fb = turning_function(a), turning_function(b)
    ref = abs(oracles.riemann_sum(fa.s, fa.angle) - oracles.riemann_sum(fb.s, fb.angle))
    bound = oracles.riemann_error_bound(fa.angle) + oracles.riemann_error_bound(fb.angle)
    assert abs(turning_distance(fa, fb) - ref) <= bound + 1e-12


@given(seeds)
def test_turning_function_monotone_to_two_pi(seed):
    tf = turning_function(hull_from_seed(seed))
    assert np.all(np.diff(tf.angle) > 0) and np.all(np.diff(tf.s) > 0)
    assert tf.s[0] == 0.0 and abs(tf.angle[-1] - 2 * np.pi) < 1e-9


@given(seeds, st.floats(-np.pi, np.pi), st.floats(-50, 50), st.floats(-50, 50))
def test_turning_function_rigid_invariance_with_pinned_reference(seed, theta, dx, dy):
    h = hull_from_seed(seed)
    moved = h.transformed(PoseDelta2D(dx, dy, theta))
    a, b = turning_function(h), turning_function(moved)
    np.testing.assert_allclose(a.s, b.s, atol=1e-9)
    np.testing.assert_allclose(a.angle, b.angle, atol=1e-9)


@given(seeds, st.floats(0.05, 20.0))
def test_scaling_about_origin_keeps_the_reference_vertex(seed, k):
    h = hull_from_seed(seed)
    scaled = convex_hull_2d(h.vertices * k)
    assert scaled.reference_index == h.reference_index
    assert turning_distance(turning_function(h), turning_function(scaled)) < 1e-9


def test_hull_vs_scaled_copy_is_zero():
    h = hull_from_seed(11)
    big = convex_hull_2d(h.vertices * 3)
    assert turning_distance(turning_function(h), turning_function(big)) == pytest.approx(0, abs=1e-12)


def test_l1_distance_bounds_area_difference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        fa = turning_function(convex_hull_2d(oracles.random_hull_points(rng)))
        fb = turning_function(convex_hull_2d(oracles.random_hull_points(rng)))
        assert turning_distance(fa, fb) <= turning_distance_l1(fa, fb) + 1e-12


# -- hausdorff and similarity ----------------------------------------------------

def test_hausdorff_examples():
    sq = convex_hull_2d(UNIT_SQUARE)
    big = convex_hull_2d([(-0.5, -0.5), (1.5, -0.5), (1.5, 1.5), (-0.5, 1.5)])
    assert hausdorff(sq, sq) == 0.0
    assert hausdorff(sq, big) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    shifted = convex_hull_2d(np.array(UNIT_SQUARE) + (5, 0))
    assert hausdorff(sq, shifted) == pytest.approx(0.0, abs=1e-12)
    assert hausdorff(sq, shifted, align=False) == pytest.approx(5.0)


@given(seeds, seeds)
def test_hausdorff_matches_brute_force_and_is_symmetric(s1, s2):
    a, b = hull_from_seed(s1), hull_from_seed(s2)
    assert hausdorff(a, b) == oracles.brute_hausdorff(a.vertices - a.centroid, b.vertices - b.centroid)
    assert hausdorff(a, b) == hausdorff(b, a)


def test_similarity_examples():
    a = hull_from_seed(2)
    assert similarity(a, a) == 0.0
    big = convex_hull_2d(a.vertices * 2)
    scale = 0.5 * (a.diameter + big.diameter)
    assert similarity(a, big) == pytest.approx(0.5 * hausdorff(a, big) / scale, abs=1e-12)
    b = hull_from_seed(3)
    delta = turning_distance(turning_function(a), turning_function(b))
    assert similarity(a, b, SimilarityWeights(1.0, 0.0)) == delta / (2 * np.pi)


def test_similarity_rejects_bad_inputs():
    a = hull_from_seed(2)
    with pytest.raises(ValueError):
        similarity(a, a, scale=0.0)
    with pytest.raises(ValueError):
        similarity(a, a, shape_metric="nope")
    with pytest.raises(ValueError):
        SimilarityWeights(0.7, 0.7)
    with pytest.raises(ValueError):
        SimilarityWeights(1.5, -0.5)


# -- intersection ----------------------------------------------------------------

def test_intersection_examples():
    sq = convex_hull_2d(UNIT_SQUARE)
    assert intersect_convex(sq, sq).area == pytest.approx(1.0)
    half = intersect_convex(sq, convex_hull_2d(np.array(UNIT_SQUARE) + (0.5, 0)))
    assert half.area == pytest.approx(0.5)
    np.testing.assert_allclose(half.vertices.min(axis=0), (0.5, 0))
    far = convex_hull_2d(np.array(UNIT_SQUARE) + (10, 0))
    assert intersect_convex(sq, far) is None and intersection_area(sq, far) == 0.0


def test_touching_hulls_have_empty_intersection():
    sq = convex_hull_2d(UNIT_SQUARE)
    edge = convex_hull_2d(np.array(UNIT_SQUARE) + (1, 0))
    corner = convex_hull_2d(np.array(UNIT_SQUARE) + (1, 1))
    assert intersect_convex(sq, edge) is None and intersect_convex(sq, corner) is None


@settings(max_examples=300)
@given(seeds)
def test_intersection_matches_clipping_oracle(seed):
    rng = np.random.default_rng(seed)
    a = convex_hull_2d(oracles.random_hull_points(rng))
    b = convex_hull_2d(oracles.random_hull_points(rng, center=a.centroid + rng.normal(0, 3, 2)))
    assert intersection_area(a, b) == pytest.approx(oracles.clip_area(a.vertices, b.vertices), abs=1e-9)
    assert intersection_area(a, b) <= min(a.area, b.area) * (1 + 1e-12)


@given(seeds, st.floats(0.05, 0.95))
def test_nested_intersection_is_the_inner_hull(seed, k):
    a = hull_from_seed(seed)
    inner = convex_hull_2d((a.vertices - a.centroid) * k + a.centroid)
    assert intersection_area(inner, a) == pytest.approx(inner.area, rel=1e-9)


def test_hull_validation():
    with pytest.raises(DegenerateHullError):
        ConvexHull2D(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ConvexHull2D(np.array(UNIT_SQUARE, float), reference_index=4)
