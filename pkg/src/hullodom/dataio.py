"""KITTI scan/pose files, synthetic scenes with exact ground truth, and trajectory metrics."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import PointCloudFrame, PoseState, Trajectory, euler_from_matrix, rotation_matrix

log = logging.getLogger(__name__)

KITTI_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)


class MalformedFileError(ValueError):
    pass


class InsufficientLengthError(ValueError):
    pass


# -- scans -----------------------------------------------------------------------

def read_scan_bin(path, index: int = 0) -> PointCloudFrame:
    """Read a KITTI velodyne scan (little-endian float32 x, y, z, intensity records)."""
    path = Path(path)
    size = path.stat().st_size
    if size % 16:
        raise MalformedFileError(f"{path}: size {size} is not a multiple of 16 bytes")
    data = np.fromfile(path, dtype="<f4").reshape(-1, 4)
    return PointCloudFrame(index, data[:, :3].astype(float))


def scan_bytes(points, intensity=None) -> bytes:
    pts = np.asarray(points, dtype="<f4").reshape(-1, 3)
    rec = np.zeros((len(pts), 4), dtype="<f4")
    rec[:, :3] = pts
    if intensity is not None:
        rec[:, 3] = intensity
    return rec.tobytes()


def write_scan_bin(points, path, intensity=None) -> None:
    Path(path).write_bytes(scan_bytes(points, intensity))


# -- poses -----------------------------------------------------------------------

def _fmt(v: float) -> str:
    # shortest repr that round-trips; integers print without ".0"
    s = repr(float(v) + 0.0)
    return s[:-2] if s.endswith(".0") else s


def pose_line(matrix: np.ndarray) -> str:
    return " ".join(_fmt(v) for v in np.asarray(matrix, dtype=float)[:3, :4].reshape(-1))


def write_poses(trajectory, path) -> None:
    """One line per pose: the row-major top 3x4 of the world-from-vehicle transform."""
    mats = trajectory.matrices() if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    with open(path, "w") as fh:
        for m in mats:
            fh.write(pose_line(m) + "\n")


def read_pose_matrices(path) -> np.ndarray:
    """Parse a KITTI pose file into an (N, 4, 4) array."""
    mats = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 12:
                raise MalformedFileError(f"{path}:{lineno}: expected 12 numbers, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise MalformedFileError(f"{path}:{lineno}: {exc}") from None
            m = np.eye(4)
            m[:3, :4] = np.reshape(vals, (3, 4))
            mats.append(m)
    return np.array(mats).reshape(-1, 4, 4)


def pose_from_matrix(m: np.ndarray, frame_index: int = 0) -> PoseState:
    _, _, roll = euler_from_matrix(m[:3, :3])
    if abs(roll) > 1e-6:
        log.warning("pose %d has roll %.3g rad; dropped", frame_index, roll)
    return PoseState.from_matrix(m, frame_index)


def read_poses(path) -> Trajectory:
    return Trajectory(pose_from_matrix(m, i) for i, m in enumerate(read_pose_matrices(path)))


def trajectory_from_matrices(mats) -> Trajectory:
    return Trajectory(pose_from_matrix(m, i) for i, m in enumerate(mats))


# -- synthetic scenes ------------------------------------------------------------

@dataclass
class Part:
    """A vertical prism: footprint polygon (landmark-local, CCW) extruded over [z0, z1].

    ``dropout`` removes each wall sample independently per frame. ``gap``
    hides one contiguous run of that fraction of the perimeter, at a random
    position in every frame (glass, or a low occluder in front of the part).
    """

    footprint: np.ndarray
    z0: float
    z1: float
    dropout: float = 0.0
    gap: float = 0.0


@dataclass
class Landmark:
    center: tuple
    parts: list
    yaw: float = 0.0
    name: str = ""

    def world_footprint(self, part: Part) -> np.ndarray:
        r = rotation_matrix(self.yaw, 0.0)[:2, :2]
        return np.asarray(part.footprint, dtype=float) @ r.T + np.asarray(self.center, dtype=float)


def rectangle(length: float, width: float) -> np.ndarray:
    hl, hw = length / 2.0, width / 2.0
    return np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])


def circle(radius: float, n: int = 24) -> np.ndarray:
    a = np.arange(n) * 2 * math.pi / n
    return radius * np.column_stack([np.cos(a), np.sin(a)])


def box(center, length, width, height, yaw=0.0, base=0.0, dropout=0.0, gap=0.0,
        name="box") -> Landmark:
    part = Part(rectangle(length, width), base, base + height, dropout, gap)
    return Landmark(tuple(center), [part], yaw, name)


def cylinder(center, radius, height, base=0.0, n=24, dropout=0.0, gap=0.0,
             name="cylinder") -> Landmark:
    part = Part(circle(radius, n), base, base + height, dropout, gap)
    return Landmark(tuple(center), [part], 0.0, name)


def prism(center, vertices, height, yaw=0.0, base=0.0, dropout=0.0, gap=0.0,
          name="prism") -> Landmark:
    part = Part(np.asarray(vertices, float), base, base + height, dropout, gap)
    return Landmark(tuple(center), [part], yaw, name)


def sedan(center, yaw=0.0, body=(4.6, 1.8), cabin=(2.4, 1.5), cabin_offset=-0.3,
          clearance=0.3, body_top=0.75, roof=1.45, body_dropout=0.0, cabin_dropout=0.0,
          body_gap=0.0, cabin_gap=0.0, name="sedan") -> Landmark:
    """Two-part landmark: a large lower body and a smaller, set-back cabin."""
    cab = rectangle(*cabin) + np.array([cabin_offset, 0.0])
    return Landmark(tuple(center), [
        Part(rectangle(*body), clearance, body_top, body_dropout, body_gap),
        Part(cab, body_top, roof, cabin_dropout, cabin_gap),
    ], yaw, name)


@dataclass
class GroundProfile:
    """Road height along world x: slope ``s_i`` applies from ``x_i`` until the next break."""

    breaks: list = field(default_factory=list)

    def height(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x)
        pts = sorted(self.breaks)
        for i, (x0, s) in enumerate(pts):
            x1 = pts[i + 1][0] if i + 1 < len(pts) else np.inf
            z += s * (np.clip(x, x0, x1) - x0)
        return z

    def slope(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for x0, s in sorted(self.breaks):
            out = np.where(x >= x0, s, out)
        return out


def drape(poses_xyyaw, ground: GroundProfile) -> list[PoseState]:
    """Ground-truth poses standing on the road: z and pitch follow the profile."""
    out = []
    for i, (x, y, yaw) in enumerate(poses_xyyaw):
        z = float(ground.height(x))
        pitch = math.atan(float(ground.slope(x)) * math.cos(yaw))
        out.append(PoseState(x, y, z, yaw, pitch, i))
    return out


def square_loop(side: float = 10.0, frames: int = 50, corner_radius: float = 2.0):
    """Counterclockwise rounded-square loop starting at the origin heading +x.

    Frames are evenly spaced along the path; the last frame stops one step
    short of closing the loop.
    """
    r = min(corner_radius, side / 2.0)
    straight = side - 2 * r
    arc = 0.5 * math.pi * r
    perim = 4 * (straight + arc)
    out = []
    for i in range(frames):
        s = perim * i / frames
        # path starts in the middle of the bottom edge
        s_edge = (s + straight / 2.0) % (straight + arc)
        k = int(((s + straight / 2.0) // (straight + arc)) % 4)
        heading = k * math.pi / 2
        # corner centers of the rounded square, bottom-left at (-side/2, 0)
        if s_edge < straight:
            along = s_edge - straight / 2.0
            yaw = heading
            mid = _edge_midpoint(k, side)
            x = mid[0] + along * math.cos(heading)
            y = mid[1] + along * math.sin(heading)
        else:
            phi = (s_edge - straight) / r
            yaw = heading + phi
            mid = _edge_midpoint(k, side)
            # end of straight part of edge k
            ex = mid[0] + straight / 2.0 * math.cos(heading)
            ey = mid[1] + straight / 2.0 * math.sin(heading)
            cx = ex - r * math.sin(heading)
            cy = ey + r * math.cos(heading)
            x = cx + r * math.sin(yaw)
            y = cy - r * math.cos(yaw)
        out.append((x, y, yaw))
    return out


def _edge_midpoint(k: int, side: float):
    return [(0.0, 0.0), (side / 2.0, side / 2.0), (0.0, side), (-side / 2.0, side / 2.0)][k]


def straight_path(frames: int, step: float, yaw: float = 0.0, start=(0.0, 0.0)):
    c, s = math.cos(yaw), math.sin(yaw)
    return [(start[0] + i * step * c, start[1] + i * step * s, yaw) for i in range(frames)]


def loop_side(perimeter: float, corner_radius: float = 2.0) -> float:
    """Side length of the rounded square whose path has the given perimeter."""
    side = (perimeter + (8.0 - 2.0 * math.pi) * corner_radius) / 4.0
    if side < 2 * corner_radius:
        raise ValueError("perimeter too short for the corner radius")
    return side


# ready-made scenes shared by the tests and demos

def landmark_loop(perimeter: float = 40.0, frames: int = 50, corner_radius: float = 2.0,
                  noise_sigma: float = 0.0) -> SceneSpec:
    """Flat rounded-square loop through a yard of ten mixed landmarks."""
    lms = [box((0, 5), 3, 2, 2.5, 0.3), cylinder((-9, -3), 0.8, 3),
           prism((9, -2), [[-1, -1], [1.5, -0.5], [0.5, 1.2], [-1.2, 0.8]], 2.0),
           box((8, 12), 2.5, 1.5, 1.8, -0.4), box((-8, 13), 4, 2, 3, 0.1),
           sedan((-10, 5), 1.4), sedan((11, 4), 1.6),
           prism((3, -5), [[-1.5, -0.7], [1.5, -0.7], [0, 1.0]], 2.2, 0.5),
           cylinder((-3, 15), 1.0, 2.5), box((4, 6), 1.5, 1.5, 1.5, 0.7)]
    path = square_loop(loop_side(perimeter, corner_radius), frames, corner_radius)
    return SceneSpec(lms, drape(path, GroundProfile()), noise_sigma=noise_sigma)


def graded_street(frames: int = 20, step: float = 1.2, grade: float = 0.05,
                  grade_start: float = 11.0) -> SceneSpec:
    """Straight drive that starts level and climbs a constant grade from ``grade_start``."""
    ground = GroundProfile([(grade_start, grade)])
    lms = [prism((6, 6), [[-1, -1], [1.5, -0.5], [0.5, 1.2], [-1.2, 0.8]], 2.5),
           box((14, -6), 3, 2, 2.5, 0.3),
           prism((22, 5), [[-1.5, -0.7], [1.5, -0.7], [0, 1.0]], 2.2, 0.5),
           cylinder((2, -5), 0.8, 3), box((28, -5), 2, 1.5, 2, 0.7),
           prism((-4, 5), [[-1, -1], [1.5, -0.5], [0.5, 1.2]], 2.0),
           box((18, 7), 2.5, 1.5, 1.8, -0.4)]
    return SceneSpec(lms, drape(straight_path(frames, step), ground), ground)


def parked_street(seed: int, frames: int = 15, spacing: float = 10.0, cabin_gap=(0.4, 0.6),
                  body_gap=(0.4, 0.6), body_gap_prob: float = 0.4,
                  noise_sigma: float = 0.02) -> SceneSpec:
    """Gently curving drive past sedans parked on alternating sides.

    Every cabin loses an arc of its walls (glass), and some bodies do too,
    so the two layers differ in how faithfully they trace the footprint.
    """
    rng = np.random.default_rng(seed)
    lms = []
    for i, x in enumerate(np.arange(-8.0, 30.0, spacing)):
        side = 1 if i % 2 else -1
        yaw = (0.0 if rng.random() < 0.5 else math.pi) + rng.normal(0, 0.15)
        cg = rng.uniform(*cabin_gap)
        bg = rng.uniform(*body_gap) if rng.random() < body_gap_prob else 0.0
        lms.append(sedan((x + rng.uniform(-1, 1), side * rng.uniform(4, 6)), yaw,
                         cabin_gap=cg, body_gap=bg))
    curvature = rng.uniform(-0.02, 0.02)
    poses, x, y, th = [], 0.0, 0.0, 0.0
    for _ in range(frames):
        poses.append((x, y, th))
        x, y, th = x + math.cos(th), y + math.sin(th), th + curvature
    return SceneSpec(lms, drape(poses, GroundProfile()), noise_sigma=noise_sigma)


@dataclass
class SceneSpec:
    landmarks: list
    trajectory: list
    ground: GroundProfile = field(default_factory=GroundProfile)
    spacing: float = 0.15
    ground_spacing: float = 0.5
    ground_radius: float = 20.0
    max_range: float = math.inf
    noise_sigma: float = 0.0

    def validate(self) -> None:
        errors = []
        for name in ("spacing", "ground_spacing", "ground_radius", "max_range"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive")
        if not self.noise_sigma >= 0:
            errors.append("noise_sigma must be nonnegative")
        if not self.trajectory:
            errors.append("trajectory is empty")
        for i, lm in enumerate(self.landmarks):
            for j, p in enumerate(lm.parts):
                if not p.z1 > p.z0:
                    errors.append(f"landmarks[{i}].parts[{j}]: z1 must exceed z0")
                if not 0.0 <= p.dropout < 1.0:
                    errors.append(f"landmarks[{i}].parts[{j}]: dropout must be in [0, 1)")
                if not 0.0 <= p.gap < 1.0:
                    errors.append(f"landmarks[{i}].parts[{j}]: gap must be in [0, 1)")
                if len(np.asarray(p.footprint)) < 3:
                    errors.append(f"landmarks[{i}].parts[{j}]: footprint needs 3 vertices")
        if errors:
            raise ValueError("invalid scene spec: " + "; ".join(errors))


def _sample_walls(poly: np.ndarray, z0: float, z1: float, spacing: float):
    """Grid samples on the walls of an extruded polygon, with each sample's
    normalized perimeter position."""
    edges, along = [], []
    lengths = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
    start = np.concatenate([[0.0], np.cumsum(lengths)[:-1]]) / lengths.sum()
    for a, b, s0, frac in zip(poly, np.roll(poly, -1, axis=0), start, lengths / lengths.sum()):
        n = max(int(math.ceil(np.linalg.norm(b - a) / spacing)), 1)
        t = np.arange(n) / n
        edges.append(a + t[:, None] * (b - a))
        along.append(s0 + t * frac)
    ring = np.concatenate(edges)
    nz = max(int(math.ceil((z1 - z0) / spacing)), 1)
    zs = z0 + (z1 - z0) * np.arange(nz + 1) / nz
    xy = np.tile(ring, (len(zs), 1))
    return np.column_stack([xy, np.repeat(zs, len(ring))]), np.tile(np.concatenate(along), len(zs))


@dataclass
class SyntheticSequence:
    frames: list
    trajectory: Trajectory
    world_trajectory: list
    landmark_points: list = field(repr=False, default_factory=list)


@dataclass
class Surface:
    """World-frame wall samples of every landmark part."""

    points: np.ndarray
    labels: np.ndarray
    part: np.ndarray
    along: np.ndarray
    dropout: np.ndarray
    gaps: np.ndarray


def landmark_surface(spec: SceneSpec) -> Surface:
    pts, labels, part_id, along, drop, gaps = [], [], [], [], [], []
    for i, lm in enumerate(spec.landmarks):
        base = float(spec.ground.height(lm.center[0]))
        for part in lm.parts:
            w, s = _sample_walls(lm.world_footprint(part), part.z0 + base, part.z1 + base,
                                 spec.spacing)
            pts.append(w)
            labels.append(np.full(len(w), i))
            part_id.append(np.full(len(w), len(gaps)))
            along.append(s)
            drop.append(np.full(len(w), part.dropout))
            gaps.append(part.gap)
    if not pts:
        z = np.zeros(0)
        return Surface(np.zeros((0, 3)), z.astype(int), z.astype(int), z, z, z)
    return Surface(np.concatenate(pts), np.concatenate(labels), np.concatenate(part_id),
                   np.concatenate(along), np.concatenate(drop), np.asarray(gaps, dtype=float))


def _visible(surf: Surface, rng: np.random.Generator) -> np.ndarray:
    keep = np.ones(len(surf.points), dtype=bool)
    if np.any(surf.dropout > 0):
        keep &= rng.random(len(surf.points)) >= surf.dropout
    if np.any(surf.gaps > 0):
        offset = rng.random(len(surf.gaps))
        keep &= (surf.along - offset[surf.part]) % 1.0 >= surf.gaps[surf.part]
    return keep


def ground_surface(spec: SceneSpec, x: float, y: float) -> np.ndarray:
    g = spec.ground_spacing
    rad = spec.ground_radius
    xs = np.arange(math.floor((x - rad) / g), math.ceil((x + rad) / g) + 1) * g
    ys = np.arange(math.floor((y - rad) / g), math.ceil((y + rad) / g) + 1) * g
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()
    keep = np.hypot(gx - x, gy - y) <= rad
    gx, gy = gx[keep], gy[keep]
    return np.column_stack([gx, gy, spec.ground.height(gx)])


def gen_synthetic_sequence(spec: SceneSpec, seed: int = 0) -> SyntheticSequence:
    """Render every ground-truth pose of ``spec`` into a vehicle-frame point cloud.

    Landmark walls and the road are sampled on fixed world grids, so with
    zero noise and no dropout consecutive frames are exact rigid copies of
    each other. Ground truth is returned relative to the first pose.
    """
    spec.validate()
    surf = landmark_surface(spec)
    frames = []
    for k, pose in enumerate(spec.trajectory):
        rng = np.random.default_rng([seed, k])
        ground = ground_surface(spec, pose.x, pose.y)
        world = np.concatenate([surf.points, ground])
        labels = np.concatenate([surf.labels, np.full(len(ground), -1)])
        keep = np.concatenate([_visible(surf, rng), np.ones(len(ground), dtype=bool)])
        keep &= np.hypot(world[:, 0] - pose.x, world[:, 1] - pose.y) <= spec.max_range
        world, labels = world[keep], labels[keep]
        local = (world - pose.position) @ pose.rotation()
        if spec.noise_sigma > 0:
            local = local + rng.normal(0.0, spec.noise_sigma, local.shape)
        frames.append(PointCloudFrame(k, local, labels))
    m0_inv = np.linalg.inv(spec.trajectory[0].matrix())
    rel = [m0_inv @ p.matrix() for p in spec.trajectory]
    return SyntheticSequence(frames, trajectory_from_matrices(rel), list(spec.trajectory), [surf.points])


# -- scene spec documents --------------------------------------------------------

def _landmark_from_dict(d: dict, where: str, errors: list) -> Landmark | None:
    kind = d.get("kind", "box")
    try:
        center = tuple(float(v) for v in d.get("center", (0.0, 0.0)))
        yaw = math.radians(float(d.get("yaw_deg", 0.0)))
        drop = float(d.get("dropout", 0.0))
        gap = float(d.get("gap", 0.0))
        if kind == "box":
            length, width = d["size"]
            return box(center, float(length), float(width), float(d["height"]), yaw,
                       dropout=drop, gap=gap)
        if kind == "cylinder":
            return cylinder(center, float(d["radius"]), float(d["height"]), dropout=drop, gap=gap)
        if kind == "prism":
            return prism(center, d["vertices"], float(d["height"]), yaw, dropout=drop, gap=gap)
        if kind == "sedan":
            kw = {k: d[k] for k in ("body", "cabin", "cabin_offset", "clearance", "body_top",
                                    "roof", "body_dropout", "cabin_dropout", "body_gap",
                                    "cabin_gap") if k in d}
            return sedan(center, yaw, **kw)
        if kind == "parts":
            parts = [Part(np.asarray(p["footprint"], float), float(p["z0"]), float(p["z1"]),
                          float(p.get("dropout", 0.0)), float(p.get("gap", 0.0)))
                     for p in d["parts"]]
            return Landmark(center, parts, yaw, d.get("name", "parts"))
        errors.append(f"{where}: unknown kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"{where}: {type(exc).__name__}: {exc}")
    return None


def scene_from_dict(doc: dict) -> SceneSpec:
    """Build a :class:`SceneSpec` from a parsed document; all field errors are reported together."""
    errors: list = []
    landmarks = []
    for i, d in enumerate(doc.get("landmarks", [])):
        lm = _landmark_from_dict(d, f"landmarks[{i}]", errors)
        if lm is not None:
            landmarks.append(lm)
    ground = GroundProfile([tuple(map(float, b)) for b in doc.get("grade", [])])
    tr = doc.get("trajectory", {})
    kind = tr.get("type", "straight")
    path = []
    try:
        if kind == "square_loop":
            path = square_loop(float(tr.get("side", 10.0)), int(tr.get("frames", 50)),
                               float(tr.get("corner_radius", 2.0)))
        elif kind == "straight":
            path = straight_path(int(tr.get("frames", 10)), float(tr.get("step", 1.0)),
                                 math.radians(float(tr.get("yaw_deg", 0.0))))
        elif kind == "poses":
            path = [(float(p[0]), float(p[1]), math.radians(float(p[2]))) for p in tr["poses"]]
        else:
            errors.append(f"trajectory: unknown type {kind!r}")
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        errors.append(f"trajectory: {type(exc).__name__}: {exc}")
    kwargs = {}
    for key in ("spacing", "ground_spacing", "ground_radius", "max_range", "noise_sigma"):
        if key in doc:
            try:
                kwargs[key] = float(doc[key])
            except (TypeError, ValueError):
                errors.append(f"{key}: not a number")
    spec = SceneSpec(landmarks, drape(path, ground), ground, **kwargs)
    try:
        spec.validate()
    except ValueError as exc:
        errors.append(str(exc).removeprefix("invalid scene spec: "))
    if errors:
        raise ValueError("invalid scene spec: " + "; ".join(errors))
    return spec


def load_scene(path) -> SceneSpec:
    with open(path) as fh:
        return scene_from_dict(yaml.safe_load(fh) or {})


# -- metrics ---------------------------------------------------------------------

@dataclass
class MetricReport:
    t_rel: float | None
    r_rel: float | None
    ae: float
    sd: float
    pete: float

    def to_text(self) -> str:
        out = io.StringIO()
        for k, v in asdict(self).items():
            out.write(f"{k} = {'nan' if v is None else f'{v:.6f}'}\n")
        return out.getvalue()

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        d = asdict(self)
        w.writerow(d.keys())
        w.writerow(["" if v is None else f"{v:.6f}" for v in d.values()])
        return out.getvalue()


def _as_matrices(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.matrices()
    return np.asarray(traj, dtype=float).reshape(-1, 4, 4)


def path_lengths(mats: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(mats[:, :3, 3], axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def eval_kitti(est, gt, lengths=KITTI_LENGTHS, step: int = 1):
    """Average relative translation error (%) and rotation error (deg/100 m).

    For every start frame (every ``step``-th) and every segment length L,
    the segment ends at the first frame whose ground-truth path length from
    the start reaches L. Errors are divided by L and averaged over all
    segments.
    """
    e, g = _as_matrices(est), _as_matrices(gt)
    if len(e) != len(g):
        raise ValueError(f"trajectory lengths differ: {len(e)} vs {len(g)}")
    if len(g) < 2:
        raise ValueError("need at least two poses")
    dist = path_lengths(g)
    t_err, r_err = [], []
    for first in range(0, len(g), step):
        for length in lengths:
            # tolerance keeps exactly-L spans on regularly spaced paths
            last = int(np.searchsorted(dist, dist[first] + length - 1e-9))
            if last >= len(g):
                continue
            dg = np.linalg.inv(g[first]) @ g[last]
            de = np.linalg.inv(e[first]) @ e[last]
            err = np.linalg.inv(de) @ dg
            t_err.append(np.linalg.norm(err[:3, 3]) / length)
            c = 0.5 * (np.trace(err[:3, :3]) - 1.0)
            r_err.append(math.acos(max(-1.0, min(1.0, c))) / length)
    if not t_err:
        raise InsufficientLengthError(
            f"ground truth path of {dist[-1]:.1f} m is shorter than {min(lengths)} m")
    return 100.0 * float(np.mean(t_err)), math.degrees(100.0 * float(np.mean(r_err)))


def position_errors(est, gt, planar: bool = False) -> np.ndarray:
    e, g = _as_matrices(est), _as_matrices(gt)
    if len(e) != len(g):
        raise ValueError(f"trajectory lengths differ: {len(e)} vs {len(g)}")
    d = e[:, :3, 3] - g[:, :3, 3]
    if planar:
        d = d[:, :2]
    return np.linalg.norm(d, axis=1)


def eval_ae_sd_pete(est, gt, planar: bool = False):
    """Mean, population standard deviation and final value of the per-frame position error."""
    err = position_errors(est, gt, planar)
    if len(err) < 2:
        raise ValueError("need at least two poses")
    return float(err.mean()), float(err.std()), float(err[-1])


def evaluate(est, gt, planar: bool = False) -> MetricReport:
    ae, sd, pete = eval_ae_sd_pete(est, gt, planar)
    try:
        t_rel, r_rel = eval_kitti(est, gt)
    except InsufficientLengthError:
        t_rel = r_rel = None
    return MetricReport(t_rel, r_rel, ae, sd, pete)


def scan_paths(directory) -> list[str]:
    return sorted(os.path.join(directory, f) for f in os.listdir(directory) if f.endswith(".bin"))
