import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hullodom.core import PointCloudFrame, PoseDelta2D, apply_delta
from hullodom.preprocess import (Cluster, EmptyInputError, PreprocessConfig, cluster_euclidean,
                                 knn_distance_stats, match_clusters, outlier_mask,
                                 preprocess_frame, remove_outliers, segment_ground)

seeds = st.integers(0, 2 ** 32 - 1)


def plane(n=40, spacing=0.5, z=0.0):
    g = (np.arange(n) - n / 2) * spacing
    xx, yy = np.meshgrid(g, g)
    return np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)])


def box_points(center, size=(2.0, 1.0), z=(0.5, 1.5), step=0.1):
    xs = np.arange(-size[0] / 2, size[0] / 2 + 1e-9, step)
    ys = np.arange(-size[1] / 2, size[1] / 2 + 1e-9, step)
    zs = np.arange(z[0], z[1] + 1e-9, step)
    xx, yy, zz = np.meshgrid(xs, ys, zs)
    return np.column_stack([xx.ravel() + center[0], yy.ravel() + center[1], zz.ravel()])


def blob(rng, center, n=200, sigma=0.3):
    return rng.normal(0, sigma, (n, 3)) + np.asarray(center, float)


# -- ground ----------------------------------------------------------------------

def test_height_mode_flat_plane_is_all_ground():
    split = segment_ground(PointCloudFrame(0, plane()), PreprocessConfig(ground_mode="height"))
    assert len(split.nonground) == 0 and len(split.ground) == 1600


@pytest.mark.parametrize("mode", ["lines", "height"])
def test_box_above_plane_is_nonground(mode):
    ground, box = plane(), box_points((5, 3))
    split = segment_ground(PointCloudFrame(0, np.vstack([ground, box])), PreprocessConfig(ground_mode=mode))
    assert len(split.nonground) == len(box)
    assert {tuple(p) for p in split.nonground} == {tuple(p) for p in box}


def test_line_mode_follows_a_grade():
    pts = plane(60)
    pts[:, 2] = 0.05 * pts[:, 0]
    box = box_points((6, 2), z=(0.5, 1.5))
    box[:, 2] += 0.05 * 6
    split = segment_ground(PointCloudFrame(0, np.vstack([pts, box])))
    assert len(split.nonground) == len(box)
    assert len(split.ground) == len(pts)


def test_empty_frame_raises():
    with pytest.raises(EmptyInputError):
        segment_ground(PointCloudFrame(0, np.zeros((0, 3))))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_segment_ground_partitions_input(seed):
    rng = np.random.default_rng(seed)
    pts = np.vstack([plane(30) + rng.normal(0, 0.02, (900, 3)), blob(rng, (4, 4, 1))])
    split = segment_ground(PointCloudFrame(0, pts))
    assert len(split.ground) + len(split.nonground) == len(pts)
    np.testing.assert_array_equal(split.ground, pts[split.ground_mask])
    np.testing.assert_array_equal(split.nonground, pts[~split.ground_mask])


# -- clustering ------------------------------------------------------------------

def test_two_distant_groups():
    rng = np.random.default_rng(0)
    pts = np.vstack([blob(rng, (0, 0, 1), sigma=0.1), blob(rng, (10, 0, 1), sigma=0.1)])
    clusters = cluster_euclidean(pts)
    assert len(clusters) == 2


def test_chain_links_transitively():
    pts = np.column_stack([np.arange(40) * 0.4, np.zeros(40), np.ones(40)])
    assert len(cluster_euclidean(pts)) == 1


def test_small_groups_are_dropped():
    pts = np.array([[0, 0, 1], [20, 0, 1.0]])
    assert cluster_euclidean(pts, PreprocessConfig(min_cluster_size=3)) == []
    assert cluster_euclidean(np.zeros((0, 3))) == []


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_clustering_ignores_point_order(seed):
    rng = np.random.default_rng(seed)
    pts = np.vstack([blob(rng, c, n=60, sigma=0.2) for c in rng.uniform(-15, 15, (4, 3))])
    a = cluster_euclidean(pts)
    b = cluster_euclidean(pts[rng.permutation(len(pts))])
    assert len(a) == len(b)
    for ca, cb in zip(a, b):
        assert {tuple(p) for p in ca.points} == {tuple(p) for p in cb.points}


def test_cluster_center_and_height():
    pts = np.array([[0, 0, 0], [2, 0, 1], [1, 3, 2.0]])
    c = Cluster(0, pts)
    np.testing.assert_allclose(c.center, pts.mean(axis=0), atol=1e-9)
    assert c.mean_height == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Cluster(0, np.zeros((0, 3)))


# -- outliers --------------------------------------------------------------------

def test_uniform_wall_grid_is_unchanged_in_neighbor_mode():
    x, z = np.meshgrid(np.arange(0, 3, 0.1), np.arange(0, 2, 0.1))
    c = Cluster(0, np.column_stack([x.ravel(), np.zeros(x.size), z.ravel()]))
    assert remove_outliers(c, PreprocessConfig(outlier_mode="neighbor")) is c
    # the cluster-wide rule trims only a few corner points of a finite grid
    assert len(remove_outliers(c).points) >= 0.97 * len(c)


def test_far_point_is_removed():
    rng = np.random.default_rng(1)
    pts = np.vstack([blob(rng, (0, 0, 1), n=50, sigma=0.03), [[10, 0, 1]]])
    out = remove_outliers(Cluster(0, pts))
    assert len(out) == 50
    assert not any(np.allclose(p, (10, 0, 1)) for p in out.points)


def test_neighbor_rule_needs_the_far_point_in_some_neighborhood():
    rng = np.random.default_rng(1)
    far = [[10, 0, 1]]
    cfg = PreprocessConfig(outlier_mode="neighbor", min_cluster_size=3)
    # with 50 close points nobody lists the far point among its 10 nearest
    big = np.vstack([blob(rng, (0, 0, 1), n=50, sigma=0.03), far])
    assert remove_outliers(Cluster(0, big), cfg).points.shape[0] == 51
    # with 10 close points it is everyone's 10th neighbor and gets flagged
    small = np.vstack([blob(rng, (0, 0, 1), n=10, sigma=0.03), far])
    assert len(remove_outliers(Cluster(0, small), cfg)) == 10


def test_far_point_flag_matches_direct_evaluation():
    rng = np.random.default_rng(2)
    pts = np.vstack([blob(rng, (0, 0, 1), n=50, sigma=0.03), [[10, 0, 1]]])
    k = 10
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    knn = np.sort(d, axis=1)[:, :k]
    d_avg = knn.mean(axis=1)
    flagged = d_avg > d_avg.mean() + 2.0 * d_avg.std()
    np.testing.assert_array_equal(outlier_mask(pts, k, 2.0, "global"), flagged)
    _, _, avg, std = knn_distance_stats(pts, k)
    np.testing.assert_allclose(avg, d_avg)
    np.testing.assert_allclose(std, knn.std(axis=1), atol=1e-12)


def test_small_cluster_is_a_no_op():
    c = Cluster(0, np.array([[0, 0, 0], [1, 0, 0], [5, 5, 5.0]]))
    assert remove_outliers(c, PreprocessConfig(outlier_k=5)) is c


def test_removal_below_min_size_drops_cluster():
    rng = np.random.default_rng(3)
    pts = np.vstack([blob(rng, (0, 0, 1), n=40, sigma=0.03), [[10, 0, 1]]])
    assert remove_outliers(Cluster(0, pts), PreprocessConfig(min_cluster_size=41)) is None


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_outlier_removal_is_deterministic_on_its_output(seed):
    rng = np.random.default_rng(seed)
    pts = np.vstack([blob(rng, (0, 0, 1), n=80, sigma=0.2), rng.uniform(-3, 3, (3, 3))])
    once = remove_outliers(Cluster(0, pts))
    if once is None:
        return
    a, b = remove_outliers(once), remove_outliers(once)
    assert (a is None) == (b is None)
    if a is not None:
        np.testing.assert_array_equal(a.points, b.points)


def test_config_validation():
    with pytest.raises(ValueError):
        PreprocessConfig(outlier_k=0)
    with pytest.raises(ValueError):
        PreprocessConfig(min_cluster_size=2)
    with pytest.raises(ValueError):
        PreprocessConfig(ground_mode="nope")


# -- matching --------------------------------------------------------------------

def clusters_at(centers):
    rng = np.random.default_rng(0)
    return [Cluster(i, blob(rng, c, n=40, sigma=0.05)) for i, c in enumerate(centers)]


def test_identical_sets_match_to_their_twins():
    cs = clusters_at([(0, 0, 1), (8, 0, 1), (0, 9, 1)])
    pairs = match_clusters(cs, cs)
    assert sorted((p.prev.id, p.curr.id) for p in pairs) == [(0, 0), (1, 1), (2, 2)]
    assert all(p.center_distance == 0 for p in pairs)


def test_uniform_shift_matches_everything():
    centers = np.array([(0, 0, 1), (8, 0, 1), (0, 9, 1), (-7, -6, 1.0)])
    prev = clusters_at(centers)
    curr = [Cluster(c.id, c.points + (0.3, 0, 0)) for c in prev]
    pairs = match_clusters(prev, curr)
    assert len(pairs) == 4
    for p in pairs:
        assert p.prev.id == p.curr.id and p.center_distance == pytest.approx(0.3)


def test_distant_cluster_fails_the_mean_gate():
    prev = clusters_at([(0, 0, 1), (8, 0, 1), (0, 9, 1), (100, 100, 1)])
    curr = clusters_at([(0.1, 0, 1), (8.1, 0, 1), (0.1, 9, 1)])
    ids = {p.prev.id for p in match_clusters(prev, curr)}
    assert ids == {0, 1, 2}


def test_prediction_and_floor():
    prev = clusters_at([(5, 0, 1), (0, 6, 1), (-5, -5, 1)])
    delta = PoseDelta2D(1.0, 0.5, 0.2)
    # the current frame sees the same clusters from the moved vehicle
    inv = delta.inverse()
    curr = [Cluster(c.id, np.column_stack([apply_delta(c.points[:, :2], inv), c.points[:, 2]]))
            for c in prev]
    pairs = match_clusters(prev, curr, predict=delta, floor=0.5)
    assert sorted((p.prev.id, p.curr.id) for p in pairs) == [(0, 0), (1, 1), (2, 2)]
    for p in pairs:
        assert p.center_distance == pytest.approx(np.linalg.norm(p.prev.center - p.curr.center))


def test_empty_inputs_give_no_matches():
    assert match_clusters([], clusters_at([(0, 0, 1)])) == []
    assert match_clusters(clusters_at([(0, 0, 1)]), []) == []


@given(seeds)
def test_matching_is_one_to_one_with_true_distances(seed):
    rng = np.random.default_rng(seed)
    prev = [Cluster(i, rng.normal(0, 0.1, (5, 3)) + c) for i, c in enumerate(rng.uniform(-10, 10, (6, 3)))]
    curr = [Cluster(i, rng.normal(0, 0.1, (5, 3)) + c) for i, c in enumerate(rng.uniform(-10, 10, (5, 3)))]
    pairs = match_clusters(prev, curr)
    assert len({p.prev.id for p in pairs}) == len(pairs) == len({p.curr.id for p in pairs})
    for p in pairs:
        assert abs(p.center_distance - np.sqrt(((p.prev.center - p.curr.center) ** 2).sum())) < 1e-9


def test_preprocess_frame_finds_boxes():
    pts = np.vstack([plane(60), box_points((5, 3)), box_points((-6, -4))])
    split, clusters = preprocess_frame(PointCloudFrame(0, pts))
    assert len(clusters) == 2
    assert [c.id for c in clusters] == [0, 1]
