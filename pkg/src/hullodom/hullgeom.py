"""Planar convex hulls and the similarity / overlap primitives used for registration.

Hulls are stored counterclockwise with collinear vertices removed. Each hull
remembers a *reference vertex*, the vertex closest to the sensor origin of
the frame it was built in; the turning function starts there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PoseDelta2D, apply_delta, as_points

TWO_PI = 2.0 * math.pi
MERGE_TOL = 1e-9


class DegenerateHullError(ValueError):
    """Fewer than three points, or all points collinear."""


@dataclass(frozen=True)
class ConvexHull2D:
    vertices: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        v = as_points(self.vertices, 2)
        if len(v) < 3:
            raise DegenerateHullError("a hull needs at least 3 vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if not 0 <= self.reference_index < len(v):
            raise ValueError("reference_index out of range")

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return polygon_area(self)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def transformed(self, delta: PoseDelta2D) -> "ConvexHull2D":
        """Rigidly move the hull; vertex order and reference index are kept."""
        return ConvexHull2D(apply_delta(self.vertices, delta), self.reference_index)

    def is_strictly_convex(self) -> bool:
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cross > 0))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _monotone_chain(pts: np.ndarray) -> np.ndarray:
    # Andrew's variant of Graham's scan; output starts at the lexicographically least point.
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = [tuple(q) for q in pts[order]]
    lower: list = []
    for q in p:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list = []
    for q in reversed(p):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return np.array(lower[:-1] + upper[:-1])


def nearest_vertex_index(vertices: np.ndarray, origin=(0.0, 0.0)) -> int:
    d = np.hypot(vertices[:, 0] - origin[0], vertices[:, 1] - origin[1])
    # argmin returns the first minimum, which is the tie-break we want
    return int(np.argmin(d))


def convex_hull_2d(points, origin=(0.0, 0.0)) -> ConvexHull2D:
    """Convex hull of planar points, CCW from the lexicographically least vertex.

    Raises :class:`DegenerateHullError` for fewer than 3 distinct points or
    collinear input.
    """
    pts = as_points(points, 2)
    if len(pts) < 3:
        raise DegenerateHullError(f"need at least 3 points, got {len(pts)}")
    pts = np.unique(pts, axis=0)
    if len(pts) < 3:
        raise DegenerateHullError("fewer than 3 distinct points")
    hull = _monotone_chain(pts)
    if len(hull) < 3:
        raise DegenerateHullError("points are collinear")
    return ConvexHull2D(hull, nearest_vertex_index(hull, origin))


def simplify_hull(hull: ConvexHull2D, tolerance: float, origin=(0.0, 0.0)) -> ConvexHull2D:
    """Drop near-collinear vertices left by range noise.

    The vertex closest to the chord between its neighbours is removed while
    that distance is below ``tolerance`` and more than three vertices remain.
    The result is re-canonicalized, with its reference vertex taken relative
    to ``origin``. A non-positive tolerance returns ``hull`` unchanged.
    """
    if not tolerance > 0:
        return hull
    v = hull.vertices.copy()
    while len(v) > 3:
        prev, nxt = np.roll(v, 1, axis=0), np.roll(v, -1, axis=0)
        chord = nxt - prev
        cross = chord[:, 0] * (v[:, 1] - prev[:, 1]) - chord[:, 1] * (v[:, 0] - prev[:, 0])
        dist = np.abs(cross) / np.maximum(np.hypot(chord[:, 0], chord[:, 1]), 1e-300)
        i = int(np.argmin(dist))
        if dist[i] >= tolerance:
            break
        v = np.delete(v, i, axis=0)
    return convex_hull_2d(v, origin)


def shoelace(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def polygon_area(hull) -> float:
    """Signed shoelace area; positive for counterclockwise vertices."""
    v = hull.vertices if isinstance(hull, ConvexHull2D) else as_points(hull, 2)
    return shoelace(v)


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    v = as_points(vertices, 2)
    # shift for conditioning, shoelace-weighted centroid
    o = v.mean(axis=0)
    x, y = v[:, 0] - o[0], v[:, 1] - o[1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    c = x * yn - xn * y
    a = c.sum() / 2.0
    if abs(a) < 1e-300:
        return o
    cx = ((x + xn) * c).sum() / (6.0 * a)
    cy = ((y + yn) * c).sum() / (6.0 * a)
    return np.array([cx + o[0], cy + o[1]])


# -- turning function ---------------------------------------------------------

@dataclass(frozen=True)
class TurningFunction:
    """Piecewise-constant cumulative exterior angle over normalized arc length.

    ``s[j]`` is where the ``j``-th step starts and ``angle[j]`` its value; the
    last step ends at 1.
    """

    s: np.ndarray
    angle: np.ndarray

    def __call__(self, x):
        idx = np.searchsorted(self.s, x, side="right") - 1
        return self.angle[np.clip(idx, 0, len(self.angle) - 1)]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(np.append(self.s, 1.0))

    def integral(self) -> float:
        return float(np.dot(self.angle, self.widths))


def exterior_angles(vertices: np.ndarray) -> np.ndarray:
    """Exterior (turning) angle at each vertex of a CCW polygon."""
    e_in = vertices - np.roll(vertices, 1, axis=0)
    e_out = np.roll(vertices, -1, axis=0) - vertices
    cross = e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]
    dot = (e_in * e_out).sum(axis=1)
    return np.arctan2(cross, dot)


def turning_function(hull: ConvexHull2D) -> TurningFunction:
    """Turning function starting at the hull's reference vertex.

    The first step carries the reference vertex's exterior angle, each later
    step adds the exterior angle of the next vertex counterclockwise, and the
    final step reaches 2*pi. Arc length is normalized by the perimeter.
    """
    v = np.roll(hull.vertices, -hull.reference_index, axis=0)
    ext = exterior_angles(v)
    sides = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
    perim = sides.sum()
    s = np.concatenate(([0.0], np.cumsum(sides[:-1]) / perim))
    angle = np.cumsum(ext)
    # pin the closing value; sum of exterior angles of a convex polygon is exactly 2*pi
    angle[-1] = TWO_PI
    return TurningFunction(s, angle)


def turning_distance(f: TurningFunction, h: TurningFunction) -> float:
    """Absolute difference of the areas under two turning functions."""
    return abs(f.integral() - h.integral())


def turning_distance_l1(f: TurningFunction, h: TurningFunction) -> float:
    """L1 distance between two turning functions, integrated exactly on the merged breakpoints."""
    s = np.union1d(f.s, h.s)
    widths = np.diff(np.append(s, 1.0))
    return float(np.dot(np.abs(f(s) - h(s)), widths))


# -- hausdorff and similarity -------------------------------------------------

def hausdorff(a: ConvexHull2D, b: ConvexHull2D, align: bool = True) -> float:
    """Symmetric vertex-to-vertex Hausdorff distance.

    With ``align`` (the default) both hulls are first moved so their area
    centroids coincide, which makes the value a size/shape disparity rather
    than a displacement.
    """
    va, vb = a.vertices, b.vertices
    if align:
        va = va - a.centroid
        vb = vb - b.centroid
    dx = va[:, None, 0] - vb[None, :, 0]
    dy = va[:, None, 1] - vb[None, :, 1]
    d = np.sqrt(dx ** 2 + dy ** 2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@dataclass(frozen=True)
class SimilarityWeights:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")


def similarity(a: ConvexHull2D, b: ConvexHull2D, weights: SimilarityWeights | None = None,
               scale: float | None = None, shape_metric: str = "area") -> float:
    """Comprehensive similarity index; 0 for identical hulls, smaller is more similar.

    The shape term (turning distance over 2*pi) and the size term (Hausdorff
    distance over ``scale``) are made dimensionless before weighting. ``scale``
    defaults to the mean diameter of the two hulls. ``shape_metric`` selects
    ``"area"`` (difference of integrals) or ``"l1"``.
    """
    w = weights or SimilarityWeights()
    if scale is None:
        scale = 0.5 * (a.diameter + b.diameter)
    if not scale > 0:
        raise ValueError(f"similarity scale must be positive, got {scale}")
    fa, fb = turning_function(a), turning_function(b)
    if shape_metric == "area":
        shape = turning_distance(fa, fb)
    elif shape_metric == "l1":
        shape = turning_distance_l1(fa, fb)
    else:
        raise ValueError(f"unknown shape metric {shape_metric!r}")
    return w.alpha * shape / TWO_PI + w.beta * hausdorff(a, b) / scale


# -- containment and intersection ---------------------------------------------

def _triangle_area_sums(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    vn = np.roll(vertices, -1, axis=0)
    ax = vertices[None, :, 0] - points[:, None, 0]
    ay = vertices[None, :, 1] - points[:, None, 1]
    bx = vn[None, :, 0] - points[:, None, 0]
    by = vn[None, :, 1] - points[:, None, 1]
    return 0.5 * np.abs(ax * by - ay * bx).sum(axis=1)


def points_in_convex(points, hull: ConvexHull2D, rtol: float = 1e-9) -> np.ndarray:
    """Vectorized :func:`point_in_convex`."""
    p = as_points(points, 2)
    area = polygon_area(hull)
    return _triangle_area_sums(p, hull.vertices) <= area * (1.0 + rtol)


def point_in_convex(p, hull: ConvexHull2D, rtol: float = 1e-9) -> bool:
    """Fan test: ``p`` is inside (or on) the hull iff the triangles it spans
    with every edge add up to no more than the hull area."""
    return bool(points_in_convex(np.asarray(p, dtype=float).reshape(1, 2), hull, rtol)[0])


def _edge_intersections(va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    p = va[:, None, :]
    r = (np.roll(va, -1, axis=0) - va)[:, None, :]
    q = vb[None, :, :]
    s = (np.roll(vb, -1, axis=0) - vb)[None, :, :]
    denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
        u = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
        pts = p + t[..., None] * r
    # parallel edges contribute no crossing; their overlaps are caught by containment
    ok = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    return pts[ok]


def _dedupe(points: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    if len(points) < 2:
        return points
    close = ((np.abs(points[:, None, 0] - points[None, :, 0]) <= tol)
             & (np.abs(points[:, None, 1] - points[None, :, 1]) <= tol))
    # drop a point if it merges with any earlier one
    return points[~np.tril(close, -1).any(axis=1)]


def intersection_vertices(a: ConvexHull2D, b: ConvexHull2D) -> np.ndarray:
    """Vertices of ``a`` ∩ ``b`` in counterclockwise order (possibly fewer than 3)."""
    va, vb = a.vertices, b.vertices
    parts = [va[points_in_convex(va, b)], vb[points_in_convex(vb, a)], _edge_intersections(va, vb)]
    pts = np.concatenate(parts, axis=0)
    if len(pts) == 0:
        return pts.reshape(0, 2)
    pts = _dedupe(pts)
    c = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]), kind="stable")
    return pts[order]


def intersect_convex(a: ConvexHull2D, b: ConvexHull2D) -> ConvexHull2D | None:
    """Convex intersection polygon, or ``None`` when empty or degenerate."""
    v = intersection_vertices(a, b)
    if len(v) < 3 or shoelace(v) <= 0.0:
        return None
    return ConvexHull2D(v, 0)


def intersection_area(a: ConvexHull2D, b: ConvexHull2D) -> float:
    """Area of ``a`` ∩ ``b`` (0 when they do not overlap)."""
    # cheap bounding-box rejection before the full vertex collection
    amin, amax = a.vertices.min(axis=0), a.vertices.max(axis=0)
    bmin, bmax = b.vertices.min(axis=0), b.vertices.max(axis=0)
    if np.any(amax < bmin) or np.any(bmax < amin):
        return 0.0
    v = intersection_vertices(a, b)
    if len(v) < 3:
        return 0.0
    return max(shoelace(v), 0.0)
