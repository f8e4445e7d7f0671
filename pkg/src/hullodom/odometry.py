"""Horizontal registration of layered landmark hulls and vertical pose estimation."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import PointCloudFrame, PoseDelta2D, PoseState, accumulate_pose
from .hullgeom import (ConvexHull2D, DegenerateHullError, SimilarityWeights, convex_hull_2d,
                       intersection_area, similarity, simplify_hull)
from .preprocess import Cluster, MatchedPair, PreprocessConfig, match_clusters, preprocess_frame

log = logging.getLogger(__name__)

AXES = ("dx", "dy", "dtheta")
LAYER_MODES = ("comprehensive", "lower", "upper")


class DegenerateGeometryError(ValueError):
    pass


# -- layering and selection ------------------------------------------------------

@dataclass
class LayeredPair:
    landmark_id: int
    partition_height: float
    prev_upper: ConvexHull2D | None
    prev_lower: ConvexHull2D | None
    curr_upper: ConvexHull2D | None
    curr_lower: ConvexHull2D | None

    def layer(self, name: str) -> tuple[ConvexHull2D | None, ConvexHull2D | None]:
        if name == "upper":
            return self.prev_upper, self.curr_upper
        if name == "lower":
            return self.prev_lower, self.curr_lower
        raise ValueError(f"unknown layer {name!r}")

    def complete_layers(self) -> list[str]:
        return [n for n in ("lower", "upper") if all(h is not None for h in self.layer(n))]


@dataclass
class SelectedPair:
    landmark_id: int
    layer: str
    prev_hull: ConvexHull2D
    curr_hull: ConvexHull2D
    sim_value: float


def _hull_or_none(points: np.ndarray, tolerance: float = 0.0) -> ConvexHull2D | None:
    if len(points) < 3:
        return None
    try:
        return simplify_hull(convex_hull_2d(points[:, :2]), tolerance)
    except DegenerateHullError:
        return None


def layer_pair(pair: MatchedPair, tolerance: float = 0.0) -> LayeredPair | None:
    """Split both clusters at the mean of their average heights and hull each layer.

    Points strictly above the partition go to the upper layer. Hull vertices
    within ``tolerance`` of their neighbours' chord are dropped (see
    :func:`~hullodom.hullgeom.simplify_hull`). Returns ``None`` when none of
    the four layers yields a hull.
    """
    h = 0.5 * (pair.prev.mean_height + pair.curr.mean_height)
    hulls = []
    for c in (pair.prev, pair.curr):
        above = c.points[:, 2] > h
        hulls += [_hull_or_none(c.points[above], tolerance),
                  _hull_or_none(c.points[~above], tolerance)]
    if all(x is None for x in hulls):
        return None
    return LayeredPair(pair.prev.id, h, *hulls)


def select_layer(lp: LayeredPair, weights: SimilarityWeights | None = None,
                 mode: str = "comprehensive") -> SelectedPair | None:
    """Pick the layer whose hull pair is most similar; ties go to the lower layer.

    ``mode`` ``"lower"``/``"upper"`` forces that layer instead (ablation).
    Returns ``None`` when no usable layer exists.
    """
    if mode not in LAYER_MODES:
        raise ValueError(f"unknown layer mode {mode!r}")
    candidates = lp.complete_layers() if mode == "comprehensive" else [mode]
    best = None
    for name in candidates:
        prev, curr = lp.layer(name)
        if prev is None or curr is None:
            continue
        sim = similarity(prev, curr, weights)
        if best is None or sim < best.sim_value:
            best = SelectedPair(lp.landmark_id, name, prev, curr, sim)
    return best


# -- cost and step size ----------------------------------------------------------

def overlap_cost(pairs, delta: PoseDelta2D) -> float:
    """Total overlap area between each current hull moved by ``delta`` and its previous hull."""
    return sum(intersection_area(p.curr_hull.transformed(delta), p.prev_hull) for p in pairs)


def full_overlap(pairs) -> float:
    """Upper bound on :func:`overlap_cost`: the sum of the smaller hull areas."""
    return sum(min(p.prev_hull.area, p.curr_hull.area) for p in pairs)


@dataclass
class OptimizerConfig:
    """Coordinate-search settings.

    ``epsilon`` bounds the per-round displacement ``||(dx, dy, lever_arm * dtheta)||``.
    In ``"fixed"`` step mode every probe moves ``fixed_step`` units of the
    axis coefficient.
    """

    c_translation: float = 0.01
    c_rotation: float = 0.0005
    epsilon: float = 1e-3
    max_rounds: int = 50
    lever_arm: float = 10.0
    step_mode: str = "adaptive"
    fixed_step: float = 1.0
    signed_vertical_mode: bool = False
    max_axis_moves: int = 2000
    shrink_on_failure: bool = True

    def __post_init__(self):
        bad = [n for n in ("c_translation", "c_rotation", "epsilon", "lever_arm", "fixed_step")
               if not getattr(self, n) > 0]
        if self.max_rounds < 1:
            bad.append("max_rounds")
        if self.step_mode not in ("adaptive", "fixed"):
            bad.append("step_mode")
        if bad:
            raise ValueError(f"invalid optimizer config fields: {', '.join(bad)}")

    def coefficient(self, axis: str) -> float:
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}")
        return self.c_rotation if axis == "dtheta" else self.c_translation


def step_multiplier(cost: float, total: float) -> int:
    """``ceil(100 * (1 - cost/total))`` with the ratio clamped to [0, 1]."""
    if not total > 0:
        raise DegenerateGeometryError("total hull area is zero")
    ratio = min(max(cost / total, 0.0), 1.0)
    # the 1e-9 keeps float round-off at full overlap from producing a unit step
    return max(int(math.ceil(100.0 * (1.0 - ratio) - 1e-9)), 0)


def adaptive_step(pairs, delta: PoseDelta2D, axis: str, cfg: OptimizerConfig | None = None,
                  cost: float | None = None) -> float:
    """Overlap-driven step length along ``axis``; 0 only at perfect overlap."""
    cfg = cfg or OptimizerConfig()
    total = sum(min(p.prev_hull.area, p.curr_hull.transformed(delta).area) for p in pairs)
    if cost is None:
        cost = overlap_cost(pairs, delta)
    return cfg.coefficient(axis) * step_multiplier(cost, total)


# -- coordinate search ----------------------------------------------------------

@dataclass
class SearchResult:
    delta: PoseDelta2D
    cost: float
    initial_cost: float
    rounds: int
    evaluations: int
    converged: bool


def coordinate_search(pairs, start: PoseDelta2D, cfg: OptimizerConfig | None = None) -> SearchResult:
    """Maximize :func:`overlap_cost` one axis at a time (dx, then dy, then dtheta).

    Along an axis both directions are probed with the current step; an
    improving move is taken and the step recomputed from the new overlap.
    In adaptive mode, when neither direction improves a step longer than
    one unit, the axis falls back to single-unit steps for the rest of the
    search. An axis is abandoned once a unit step fails both ways. A round
    that moves less than ``epsilon`` ends the search.
    """
    cfg = cfg or OptimizerConfig()
    pairs = list(pairs)
    if not pairs:
        raise ValueError("coordinate search needs at least one hull pair")
    total = full_overlap(pairs)
    scale = np.array([1.0, 1.0, cfg.lever_arm])
    evals = 0

    def cost(t):
        nonlocal evals
        evals += 1
        return overlap_cost(pairs, PoseDelta2D(t[0], t[1], t[2]))

    t = start.as_array()
    g = cost(t)
    g0 = g
    adaptive = cfg.step_mode == "adaptive"
    shrink = adaptive and cfg.shrink_on_failure
    # per-axis cap on the step multiplier, dropped to one unit once both probes fail
    cap = [math.inf] * len(AXES)
    rounds = 0
    converged = False
    for rounds in range(1, cfg.max_rounds + 1):
        t_round = t.copy()
        for u, axis in enumerate(AXES):
            c = cfg.coefficient(axis)
            m = min(step_multiplier(g, total), cap[u]) if adaptive else cfg.fixed_step
            preferred = 1.0
            moves = 0
            while m > 0 and moves < cfg.max_axis_moves:
                moved = False
                for d in (preferred, -preferred):
                    cand = t.copy()
                    cand[u] += d * c * m
                    gc = cost(cand)
                    if gc > g + 1e-12 * max(total, 1.0):
                        t, g, preferred, moved = cand, gc, d, True
                        break
                if moved:
                    moves += 1
                    if adaptive:
                        m = min(step_multiplier(g, total), cap[u])
                    continue
                if not shrink or m <= 1:
                    break
                m = cap[u] = 1
        if np.linalg.norm((t - t_round) * scale) < cfg.epsilon:
            converged = True
            break
    return SearchResult(PoseDelta2D(t[0], t[1], t[2]), g, g0, rounds, evals, converged)


def optimize_pose(pairs, start: PoseDelta2D | None = None,
                  cfg: OptimizerConfig | None = None) -> PoseDelta2D:
    """Pose delta that maximizes the total hull overlap, searched from ``start``."""
    return coordinate_search(pairs, start or PoseDelta2D(), cfg).delta


def procrustes_2d(src: np.ndarray, dst: np.ndarray) -> PoseDelta2D:
    """Least-squares rigid motion mapping ``src`` (N, 2) onto ``dst`` (N, 2)."""
    src = np.asarray(src, dtype=float)[:, :2]
    dst = np.asarray(dst, dtype=float)[:, :2]
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    sxx = (a * b).sum()
    sxy = (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]).sum()
    theta = math.atan2(sxy, sxx)
    c, s = math.cos(theta), math.sin(theta)
    t = cd - np.array([c * cs[0] - s * cs[1], s * cs[0] + c * cs[1]])
    return PoseDelta2D(t[0], t[1], theta)


# -- vertical estimation ---------------------------------------------------------

@dataclass(frozen=True)
class GroundPlane:
    normal: np.ndarray
    offset: float
    inlier_count: int

    @property
    def forward_slope(self) -> float:
        """Rise per meter along the vehicle x axis."""
        return float(-self.normal[0] / self.normal[2])


def fit_ground_plane(points) -> GroundPlane:
    """Total least squares plane through ``points`` with an upward unit normal."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 3:
        raise DegenerateGeometryError(f"plane fit needs 3 points, got {len(p)}")
    c = p.mean(axis=0)
    _, sv, vt = np.linalg.svd(p - c, full_matrices=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("points are collinear or coincident")
    n = vt[-1]
    if n[2] < 0:
        n = -n
    n = n / np.linalg.norm(n)
    return GroundPlane(n, float(-n @ c), len(p))


def pitch_change(n_f, n_r) -> float:
    """Included angle between two plane normals, in [0, pi]."""
    a = np.asarray(n_f, dtype=float)
    b = np.asarray(n_r, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("plane normals must be nonzero")
    return math.acos(max(-1.0, min(1.0, float(a @ b) / (na * nb))))


def vertical_change(dx: float, dy: float, cum_pitch: float, cum_yaw: float,
                    signed: bool = False) -> float:
    """Height change for one step: ``|sin(cum_pitch)| * cos(cum_yaw) * hypot(dx, dy)``.

    With ``signed`` the absolute value is dropped, so descents come out negative.
    """
    s = math.sin(cum_pitch)
    if not signed:
        s = abs(s)
    return s * math.cos(cum_yaw) * math.hypot(dx, dy)


# -- frame pipeline --------------------------------------------------------------

@dataclass
class OdometryConfig:
    """Everything the frame pipeline needs.

    ``pitch_mode``: ``"travel"`` scales the front/rear normal angle by the
    distance travelled over the distance between the two ground regions;
    ``"literal"`` adds the full angle every frame. ``hull_tolerance`` is the
    chord distance below which noisy near-collinear hull vertices are dropped.
    ``match_floor`` is the center distance that always passes the matching
    gate (only meaningful with ``predict_matching``).
    """

    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    weights: SimilarityWeights = field(default_factory=SimilarityWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    layer_mode: str = "comprehensive"
    front_region: tuple[float, float] = (2.0, 10.0)
    rear_region: tuple[float, float] = (-10.0, -2.0)
    lateral_limit: float = 3.0
    min_plane_points: int = 10
    pitch_mode: str = "travel"
    predict_matching: bool = True
    centroid_init: bool = True
    hull_tolerance: float = 0.1
    match_floor: float = 0.5

    def __post_init__(self):
        if self.hull_tolerance < 0 or self.match_floor < 0:
            raise ValueError("hull_tolerance and match_floor must be nonnegative")
        if self.layer_mode not in LAYER_MODES:
            raise ValueError(f"invalid layer mode {self.layer_mode!r}")
        if self.pitch_mode not in ("travel", "literal"):
            raise ValueError(f"invalid pitch mode {self.pitch_mode!r}")


@dataclass
class FrameResult:
    pose: PoseState
    delta: PoseDelta2D
    dpsi: float
    dz: float
    extrapolated: bool
    n_matches: int = 0
    n_pairs: int = 0
    layers: dict = field(default_factory=dict)
    search: SearchResult | None = None
    timings: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list, repr=False)


class Odometer:
    """Sequential frame-to-frame odometry.

    Feed frames in order with :meth:`process`. The first frame defines the
    world frame. When a frame yields no usable hull pair the previous motion
    is repeated and the pose is flagged as extrapolated.

    After each call ``ground``, ``clusters`` and ``tracks`` describe the
    frame just processed; ``tracks[i]`` is a landmark id that persists for
    as long as the cluster keeps being matched.
    """

    def __init__(self, config: OdometryConfig | None = None):
        self.config = config or OdometryConfig()
        self.pose: PoseState | None = None
        self.last_delta = PoseDelta2D()
        self._prev_clusters: list[Cluster] = []
        self.ground: np.ndarray | None = None
        self.clusters: list[Cluster] = []
        self.tracks: list[int] = []
        self._next_track = 0
        self._search_time = 0.0

    def _assign_tracks(self, clusters, matches) -> None:
        prev_track = {c.id: t for c, t in zip(self._prev_clusters, self.tracks)}
        inherited = {m.curr.id: prev_track.get(m.prev.id) for m in matches}
        tracks = []
        for c in clusters:
            t = inherited.get(c.id)
            if t is None:
                t = self._next_track
                self._next_track += 1
            tracks.append(t)
        self.tracks = tracks

    def process(self, frame: PointCloudFrame) -> FrameResult:
        cfg = self.config
        t0 = time.perf_counter()
        split, clusters = preprocess_frame(frame, cfg.preprocess)
        t1 = time.perf_counter()
        self.ground, self.clusters = split.ground, clusters

        if self.pose is None:
            self.pose = PoseState(frame_index=frame.index)
            self._assign_tracks(clusters, [])
            self._prev_clusters = clusters
            return FrameResult(self.pose, PoseDelta2D(), 0.0, 0.0, False,
                               timings={"preprocess": t1 - t0, "odometry": 0.0, "search": 0.0})

        self._search_time = 0.0
        delta, selected, matches, search = self._horizontal(clusters)
        extrapolated = delta is None
        if extrapolated:
            delta = self.last_delta
            dpsi = 0.0
            log.info("frame %d: no usable landmarks, extrapolating", frame.index)
        else:
            dpsi = self._pitch(split.ground, delta)
        cum_pitch = self.pose.pitch + dpsi
        cum_yaw = self.pose.yaw + delta.dtheta
        dz = vertical_change(delta.dx, delta.dy, cum_pitch, cum_yaw, cfg.optimizer.signed_vertical_mode)
        self.pose = accumulate_pose(self.pose, delta, dpsi, dz, frame_index=frame.index,
                                    extrapolated=extrapolated)
        self.last_delta = delta
        self._assign_tracks(clusters, matches)
        self._prev_clusters = clusters
        t2 = time.perf_counter()
        layers = {}
        for s in selected:
            layers[s.layer] = layers.get(s.layer, 0) + 1
        timings = {"preprocess": t1 - t0, "odometry": t2 - t1, "search": self._search_time}
        return FrameResult(self.pose, delta, dpsi, dz, extrapolated, len(matches), len(selected),
                           layers, search, timings, selected)

    def _search(self, selected, start):
        t = time.perf_counter()
        result = coordinate_search(selected, start, self.config.optimizer)
        self._search_time += time.perf_counter() - t
        return result

    def _select(self, matches):
        cfg = self.config
        selected = []
        for m in matches:
            lp = layer_pair(m, cfg.hull_tolerance)
            if lp is None:
                continue
            sp = select_layer(lp, cfg.weights, cfg.layer_mode)
            if sp is not None:
                selected.append(sp)
        return selected

    def _starts(self, matches):
        starts = [self.last_delta]
        if not self.config.centroid_init or len(matches) < 2:
            return starts
        src = np.array([m.curr.center for m in matches])
        dst = np.array([m.prev.center for m in matches])
        starts.append(procrustes_2d(src, dst))
        # every pair of matches gives a hypothesis; a few wrong matches cannot spoil all of them
        n = min(len(matches), 8)
        for i in range(n):
            for j in range(i + 1, n):
                starts.append(procrustes_2d(src[[i, j]], dst[[i, j]]))
        return starts

    def _horizontal(self, clusters):
        cfg = self.config
        prev = self._prev_clusters
        if not prev or not clusters:
            return None, [], [], None
        predict = self.last_delta if cfg.predict_matching else None
        matches = match_clusters(prev, clusters, predict=predict, floor=cfg.match_floor)
        selected = self._select(matches)
        if not selected:
            return None, [], matches, None
        start = max(self._starts(matches), key=lambda s: overlap_cost(selected, s))
        search = self._search(selected, start)
        if cfg.predict_matching:
            # re-associate with the estimated motion; refine if the pairing changed
            rematch = match_clusters(prev, clusters, predict=search.delta,
                                     floor=cfg.match_floor)
            ids = {(m.prev.id, m.curr.id) for m in matches}
            if {(m.prev.id, m.curr.id) for m in rematch} != ids:
                reselected = self._select(rematch)
                if reselected:
                    matches, selected = rematch, reselected
                    search = self._search(selected, search.delta)
        return search.delta, selected, matches, search

    def _pitch(self, ground: np.ndarray, delta: PoseDelta2D) -> float:
        cfg = self.config
        if ground is None or len(ground) == 0:
            return 0.0
        lat = np.abs(ground[:, 1]) <= cfg.lateral_limit
        fr = lat & (ground[:, 0] >= cfg.front_region[0]) & (ground[:, 0] <= cfg.front_region[1])
        rr = lat & (ground[:, 0] >= cfg.rear_region[0]) & (ground[:, 0] <= cfg.rear_region[1])
        if fr.sum() < cfg.min_plane_points or rr.sum() < cfg.min_plane_points:
            return 0.0
        try:
            front = fit_ground_plane(ground[fr])
            rear = fit_ground_plane(ground[rr])
        except DegenerateGeometryError:
            return 0.0
        angle = pitch_change(front.normal, rear.normal)
        angle = math.copysign(angle, front.forward_slope - rear.forward_slope)
        if cfg.pitch_mode == "literal":
            return angle
        baseline = 0.5 * (sum(cfg.front_region) - sum(cfg.rear_region))
        return angle * delta.translation_norm / baseline


def process_frame(state: Odometer | None, frame: PointCloudFrame,
                  cfg: OdometryConfig | None = None) -> tuple[Odometer, PoseState]:
    """Functional front end to :class:`Odometer`: pass ``None`` for the first frame."""
    if state is None:
        state = Odometer(cfg)
    return state, state.process(frame).pose
