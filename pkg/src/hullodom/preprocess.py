"""Frame preprocessing: ground split, Euclidean clustering, outlier removal, landmark matching."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import PointCloudFrame, apply_delta, as_points


class EmptyInputError(ValueError):
    pass


@dataclass
class PreprocessConfig:
    """Knobs for the preprocessing stage.

    ``ground_mode`` is ``"lines"`` (piecewise line fits per angular segment)
    or ``"height"`` (plain ``z <= height_threshold``). ``sensor_height`` is
    the height of the frame origin above the road; the first ground line of
    each segment must start within ``max_intercept`` of ``-sensor_height``.
    ``outlier_mode`` picks how points are flagged, see :func:`remove_outliers`.
    """

    ground_mode: str = "lines"
    n_segments: int = 180
    bin_width: float = 1.0
    max_slope: float = 0.15
    max_line_distance: float = 0.2
    max_intercept: float = 0.3
    max_fit_error: float = 0.05
    sensor_height: float = 0.0
    height_threshold: float = 0.2
    cluster_distance_threshold: float = 0.5
    min_cluster_size: int = 30
    outlier_k: int = 10
    outlier_sigma: float = 2.0
    outlier_mode: str = "global"
    workers: int = 1

    def __post_init__(self):
        positive = ("n_segments", "bin_width", "max_slope", "max_line_distance", "max_intercept",
                    "cluster_distance_threshold", "outlier_sigma")
        bad = [name for name in positive if not getattr(self, name) > 0]
        if self.outlier_k < 1:
            bad.append("outlier_k")
        if self.min_cluster_size < 3:
            bad.append("min_cluster_size")
        if self.ground_mode not in ("lines", "height"):
            bad.append("ground_mode")
        if self.outlier_mode not in ("global", "neighbor"):
            bad.append("outlier_mode")
        if bad:
            raise ValueError(f"invalid preprocess config fields: {', '.join(bad)}")


@dataclass
class GroundSplit:
    ground: np.ndarray
    nonground: np.ndarray
    ground_mask: np.ndarray = field(repr=False)


@dataclass
class Cluster:
    id: int
    points: np.ndarray
    labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.points = as_points(self.points, 3)
        if len(self.points) == 0:
            raise ValueError("cluster must contain points")

    @property
    def center(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def mean_height(self) -> float:
        return float(self.points[:, 2].mean())

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class MatchedPair:
    prev: Cluster
    curr: Cluster
    center_distance: float


# -- ground segmentation ---------------------------------------------------------

def _fit_line(r, z):
    n = len(r)
    rm, zm = r.mean(), z.mean()
    srr = ((r - rm) ** 2).sum()
    if n < 2 or srr <= 0:
        return 0.0, zm, 0.0
    m = ((r - rm) * (z - zm)).sum() / srr
    b = zm - m * rm
    err = math.sqrt(((z - (m * r + b)) ** 2).mean())
    return m, b, err


def _segment_lines(r, z, cfg: PreprocessConfig):
    """Fit ground lines to one angular segment.

    Returns a list of ``(r_start, r_end, slope, intercept)``.
    """
    bins = np.floor(r / cfg.bin_width).astype(int)
    order = np.lexsort((z, bins))
    b_sorted = bins[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = b_sorted[1:] != b_sorted[:-1]
    # lowest point of each radial bin is the ground candidate
    proto_r, proto_z = r[order][first], z[order][first]

    lines = []
    cur_r: list = []
    cur_z: list = []
    ground_z = -cfg.sensor_height

    def close(cr, cz):
        if len(cr) < 2:
            return
        m, b, err = _fit_line(np.array(cr), np.array(cz))
        if abs(m) > cfg.max_slope or err > cfg.max_fit_error:
            return
        if not lines and abs(b - ground_z) > cfg.max_intercept:
            return
        lines.append((cr[0], cr[-1], m, b))

    def plausible_start(pr, pz):
        if lines:
            r0, r1, m, b = lines[-1]
            return abs(pz - (m * pr + b)) <= cfg.max_intercept
        return abs(pz - ground_z) <= cfg.max_intercept + cfg.max_slope * pr

    for pr, pz in zip(proto_r, proto_z):
        if cur_r:
            if len(cur_r) == 1:
                dr = pr - cur_r[0]
                ok = dr > 0 and abs(pz - cur_z[0]) <= cfg.max_slope * dr + cfg.max_fit_error
            else:
                m, b, err = _fit_line(np.array(cur_r + [pr]), np.array(cur_z + [pz]))
                ok = abs(m) <= cfg.max_slope and err <= cfg.max_fit_error
            if ok:
                cur_r.append(pr)
                cur_z.append(pz)
                continue
            if len(cur_r) == 1:
                # isolated elevated candidate (e.g. an object base); skip it
                continue
            close(cur_r, cur_z)
            cur_r, cur_z = [], []
        if plausible_start(pr, pz):
            cur_r, cur_z = [pr], [pz]
    close(cur_r, cur_z)
    return lines


def segment_ground(frame, cfg: PreprocessConfig | None = None) -> GroundSplit:
    """Split a frame into ground and non-ground points.

    In ``"lines"`` mode the points are binned into angular segments around
    the z axis; in each segment the lowest point per range bin feeds a
    piecewise line fit in (range, z) and a point is ground when it lies
    within ``max_line_distance`` of the nearest accepted line. Segments with
    no accepted line borrow the lines of the angularly nearest segment that
    has some, or fall back to the flat plane ``z = -sensor_height``.
    """
    cfg = cfg or PreprocessConfig()
    pts = frame.points if isinstance(frame, PointCloudFrame) else as_points(frame, 3)
    if len(pts) == 0:
        raise EmptyInputError("cannot segment an empty frame")

    if cfg.ground_mode == "height":
        mask = pts[:, 2] <= cfg.height_threshold
        return GroundSplit(pts[mask], pts[~mask], mask)

    r = np.hypot(pts[:, 0], pts[:, 1])
    seg = np.floor((np.arctan2(pts[:, 1], pts[:, 0]) + math.pi) / (2 * math.pi) * cfg.n_segments)
    seg = np.clip(seg.astype(int), 0, cfg.n_segments - 1)
    mask = np.zeros(len(pts), dtype=bool)
    ground_z = -cfg.sensor_height

    order = np.argsort(seg, kind="stable")
    bounds = np.searchsorted(seg[order], np.arange(cfg.n_segments + 1))
    members = [order[bounds[k]:bounds[k + 1]] for k in range(cfg.n_segments)]
    fitted = [_segment_lines(r[idx], pts[idx, 2], cfg) if len(idx) else [] for idx in members]
    have = np.flatnonzero([bool(ln) for ln in fitted])
    for k, idx in enumerate(members):
        if len(idx) == 0:
            continue
        rk, zk = r[idx], pts[idx, 2]
        lines = fitted[k]
        if not lines and len(have):
            # cyclic distance in segments
            gap = np.abs(have - k)
            lines = fitted[have[np.argmin(np.minimum(gap, cfg.n_segments - gap))]]
        if not lines:
            mask[idx] = np.abs(zk - ground_z) <= cfg.max_line_distance
            continue
        starts = np.array([ln[0] for ln in lines])
        ends = np.array([ln[1] for ln in lines])
        # nearest line by range: inside its span, or closest endpoint
        gap = np.maximum(starts[None, :] - rk[:, None], rk[:, None] - ends[None, :])
        which = np.argmin(np.maximum(gap, 0.0), axis=1)
        slope = np.array([ln[2] for ln in lines])[which]
        icpt = np.array([ln[3] for ln in lines])[which]
        mask[idx] = np.abs(zk - (slope * rk + icpt)) <= cfg.max_line_distance
    return GroundSplit(pts[mask], pts[~mask], mask)


# -- clustering ------------------------------------------------------------------

def cluster_euclidean(points, cfg: PreprocessConfig | None = None, labels=None) -> list[Cluster]:
    """Connected components of the fixed-radius neighbor graph.

    Components smaller than ``min_cluster_size`` are discarded. Clusters are
    numbered by their smallest point coordinate (lexicographic), so the
    result does not depend on input order.
    """
    cfg = cfg or PreprocessConfig()
    pts = as_points(points, 3)
    if len(pts) == 0:
        return []
    tree = cKDTree(pts)
    pairs = tree.query_pairs(cfg.cluster_distance_threshold, output_type="ndarray")
    n = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, comp = connected_components(graph, directed=False)
    sizes = np.bincount(comp, minlength=n_comp)

    lab = None if labels is None else np.asarray(labels, dtype=int)
    found = []
    for c in np.flatnonzero(sizes >= cfg.min_cluster_size):
        sel = comp == c
        cp = pts[sel]
        key = tuple(cp[np.lexsort(cp.T[::-1])][0])
        found.append((key, cp, None if lab is None else lab[sel]))
    found.sort(key=lambda t: t[0])
    return [Cluster(i, cp, cl) for i, (_, cp, cl) in enumerate(found)]


# -- outlier removal -------------------------------------------------------------

def knn_distance_stats(points: np.ndarray, k: int, workers: int = 1):
    """Per-point mean and standard deviation of the distances to the ``k`` nearest neighbors.

    Returns ``(dist, nbr, d_avg, d_std)`` with ``dist``/``nbr`` of shape (N, k).
    """
    tree = cKDTree(points)
    dist, nbr = tree.query(points, k=k + 1, workers=workers)
    dist, nbr = dist[:, 1:], nbr[:, 1:]
    d_avg = dist.mean(axis=1)
    d_std = np.sqrt(((dist - d_avg[:, None]) ** 2).mean(axis=1))
    return dist, nbr, d_avg, d_std


def outlier_mask(points: np.ndarray, k: int, sigma: float, mode: str = "global",
                 workers: int = 1) -> np.ndarray:
    """Boolean mask of flagged points.

    ``"neighbor"``: for every point p, a neighbor p_i among its ``k`` nearest
    is flagged when ``d(p, p_i) > d_avg(p) + sigma * d_std(p)``.

    ``"global"``: a point is flagged when its own mean neighbor distance
    exceeds the cluster mean of those values by more than ``sigma`` cluster
    standard deviations. This catches isolated points that no other point
    has among its nearest neighbors.
    """
    dist, nbr, d_avg, d_std = knn_distance_stats(points, k, workers)
    flagged = np.zeros(len(points), dtype=bool)
    if mode == "neighbor":
        over = dist > (d_avg + sigma * d_std)[:, None]
        flagged[nbr[over]] = True
    elif mode == "global":
        mu, sd = d_avg.mean(), d_avg.std()
        flagged = d_avg > mu + sigma * sd
    else:
        raise ValueError(f"unknown outlier mode {mode!r}")
    return flagged


def remove_outliers(cluster: Cluster, cfg: PreprocessConfig | None = None) -> Cluster | None:
    """Statistical outlier removal inside one cluster.

    Clusters with ``outlier_k`` points or fewer are returned unchanged.
    Returns ``None`` when removal leaves fewer than ``min_cluster_size`` points.
    """
    cfg = cfg or PreprocessConfig()
    if len(cluster) <= cfg.outlier_k:
        return cluster
    flagged = outlier_mask(cluster.points, cfg.outlier_k, cfg.outlier_sigma, cfg.outlier_mode,
                           cfg.workers)
    if not flagged.any():
        return cluster
    keep = ~flagged
    if keep.sum() < cfg.min_cluster_size:
        return None
    labels = None if cluster.labels is None else cluster.labels[keep]
    return Cluster(cluster.id, cluster.points[keep], labels)


# -- matching --------------------------------------------------------------------

def match_clusters(prev, curr, predict=None, gate_rtol: float = 1e-9,
                   floor: float = 0.0) -> list[MatchedPair]:
    """Nearest-center matching gated by the mean of the per-cluster minima.

    For each previous cluster the closest current center is found. A pair is
    kept when its distance does not exceed the mean of all those minima.
    Pairs are then claimed in ascending distance order so that every
    cluster appears in at most one pair.

    ``predict`` is an optional :class:`~hullodom.core.PoseDelta2D` guess of
    the motion; current centers are mapped through it before comparing.
    With a good guess every residual is small and the mean gate would still
    drop about half of them, so ``floor`` sets a distance that always passes.
    """
    if len(prev) == 0 or len(curr) == 0:
        return []
    cp = np.array([c.center for c in prev])
    cc = np.array([c.center for c in curr])
    if predict is not None:
        cc[:, :2] = apply_delta(cc[:, :2], predict)
    d = np.sqrt(((cp[:, None, :] - cc[None, :, :]) ** 2).sum(-1))
    best = d.argmin(axis=1)
    dmin = d[np.arange(len(prev)), best]
    gate = max(dmin.mean(), floor)
    tol = gate_rtol * max(gate, 1.0)
    order = np.argsort(dmin, kind="stable")
    claimed: set = set()
    out = []
    for r in order:
        s = int(best[r])
        if dmin[r] > gate + tol or s in claimed:
            continue
        claimed.add(s)
        raw = float(np.linalg.norm(prev[r].center - curr[s].center))
        out.append(MatchedPair(prev[r], curr[s], raw))
    return out


def preprocess_frame(frame: PointCloudFrame, cfg: PreprocessConfig | None = None):
    """Ground split, clustering and outlier removal for one frame.

    Returns ``(GroundSplit, clusters)``.
    """
    cfg = cfg or PreprocessConfig()
    split = segment_ground(frame, cfg)
    labels = None
    if frame.labels is not None:
        labels = frame.labels[~split.ground_mask]
    clusters = []
    for c in cluster_euclidean(split.nonground, cfg, labels):
        c = remove_outliers(c, cfg)
        if c is not None:
            clusters.append(c)
    for i, c in enumerate(clusters):
        c.id = i
    return split, clusters
