"""Value types, planar rigid transforms and pose accumulation.

Conventions used throughout the package:

* The vehicle frame is x forward, y left, z up.
* Angles are wrapped to the half-open interval (-pi, pi].
* ``pitch`` is positive nose-up. The world-from-vehicle rotation is
  ``Rz(yaw) @ Ry(-pitch)`` so that a vehicle pitched up by ``p`` maps its
  forward axis to ``(cos p, 0, sin p)``.
* The first frame's vehicle frame is the world frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(angle, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def as_points(points, dim: int = 3) -> np.ndarray:
    """Coerce ``points`` to a float array of shape (N, dim)."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, dim))
    arr = arr.reshape(-1, arr.shape[-1])
    if arr.shape[1] != dim:
        raise ValueError(f"expected points with {dim} columns, got shape {arr.shape}")
    return arr


@dataclass
class PointCloudFrame:
    """One LiDAR sweep in the vehicle frame.

    ``labels`` is optional per-point metadata (landmark id, -1 for ground)
    carried along by the synthetic generator and the map exporter.
    """

    index: int
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("frame index must be nonnegative")
        self.points = as_points(self.points, 3)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
            if len(self.labels) != len(self.points):
                raise ValueError("labels must have one entry per point")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class PoseDelta2D:
    """Planar rigid motion ``[dx, dy, dtheta]``.

    Mapping a point ``p`` expressed in frame k through the delta gives its
    coordinates in frame k-1: ``R(dtheta) @ p + (dx, dy)``. Equivalently it
    is the pose of vehicle k seen from vehicle k-1.
    """

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dtheta)):
            raise ValueError(f"non-finite pose delta {self!r}")
        object.__setattr__(self, "dtheta", wrap_angle(self.dtheta))

    @classmethod
    def from_array(cls, arr) -> "PoseDelta2D":
        dx, dy, dtheta = (float(v) for v in arr)
        return cls(dx, dy, dtheta)

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])

    def inverse(self) -> "PoseDelta2D":
        c, s = math.cos(self.dtheta), math.sin(self.dtheta)
        # -R(-theta) t
        return PoseDelta2D(-(c * self.dx + s * self.dy), -(-s * self.dx + c * self.dy), -self.dtheta)

    def compose(self, other: "PoseDelta2D") -> "PoseDelta2D":
        """``self`` followed by ``other`` (other expressed in self's end frame)."""
        x, y = apply_delta(np.array([other.dx, other.dy]), self)
        return PoseDelta2D(float(x), float(y), self.dtheta + other.dtheta)

    @property
    def translation_norm(self) -> float:
        return math.hypot(self.dx, self.dy)


def rotation_2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply_delta(points, delta: PoseDelta2D) -> np.ndarray:
    """Rotate by ``delta.dtheta`` then translate by ``(delta.dx, delta.dy)``.

    Accepts a single point of shape (2,) or an array of shape (N, 2) and
    returns the same shape.
    """
    p = np.asarray(points, dtype=float)
    c, s = math.cos(delta.dtheta), math.sin(delta.dtheta)
    x, y = p[..., 0], p[..., 1]
    out = np.empty(p.shape, dtype=float)
    out[..., 0] = c * x - s * y + delta.dx
    out[..., 1] = s * x + c * y + delta.dy
    return out


def rotation_matrix(yaw: float, pitch: float, roll: float = 0.0) -> np.ndarray:
    """World-from-vehicle rotation ``Rz(yaw) @ Ry(-pitch) @ Rx(roll)``."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    # Ry(-pitch)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def euler_from_matrix(rot: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_matrix`: returns ``(yaw, pitch, roll)``."""
    r = np.asarray(rot, dtype=float)
    pitch = math.asin(max(-1.0, min(1.0, r[2, 0])))
    yaw = math.atan2(r[1, 0], r[0, 0])
    roll = math.atan2(r[2, 1], r[2, 2])
    return yaw, pitch, roll


@dataclass(frozen=True)
class PoseState:
    """Accumulated world pose of the vehicle at one frame. Roll is always 0."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    frame_index: int = 0
    extrapolated: bool = field(default=False, compare=False)
    # exact rotation when the pose was parsed from a matrix; not copied by replace()
    _rotation: np.ndarray | None = field(default=None, init=False, compare=False, repr=False)

    @classmethod
    def from_matrix(cls, m, frame_index: int = 0) -> "PoseState":
        """Pose from a 4x4 (or 3x4) transform.

        A roll-free rotation is kept bit-exact, so writing the pose back
        reproduces the input numbers. Any roll is dropped.
        """
        m = np.asarray(m, dtype=float)
        yaw, pitch, roll = euler_from_matrix(m[:3, :3])
        pose = cls(float(m[0, 3]), float(m[1, 3]), float(m[2, 3]), yaw, pitch, frame_index)
        if abs(roll) <= 1e-12:
            object.__setattr__(pose, "_rotation", m[:3, :3].copy())
        return pose

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))
        object.__setattr__(self, "pitch", wrap_angle(self.pitch))

    @property
    def roll(self) -> float:
        return 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        if self._rotation is not None:
            return self._rotation.copy()
        return rotation_matrix(self.yaw, self.pitch)

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 world-from-vehicle transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation()
        m[:3, 3] = self.position
        return m

    def transform_points(self, points) -> np.ndarray:
        """Map vehicle-frame points (N, 3) into the world frame."""
        p = as_points(points, 3)
        return p @ self.rotation().T + self.position


def accumulate_pose(prev: PoseState, delta: PoseDelta2D, dpsi: float = 0.0, dz: float = 0.0,
                    frame_index: int | None = None, extrapolated: bool = False) -> PoseState:
    """Advance ``prev`` by one frame of odometry.

    The planar step ``(dx, dy)`` is expressed in the previous vehicle frame,
    so it is rotated by the previous yaw before being added to the world
    position. Yaw and pitch accumulate additively; ``dz`` is added as given.
    """
    c, s = math.cos(prev.yaw), math.sin(prev.yaw)
    return PoseState(
        x=prev.x + c * delta.dx - s * delta.dy,
        y=prev.y + s * delta.dx + c * delta.dy,
        z=prev.z + dz,
        yaw=prev.yaw + delta.dtheta,
        pitch=prev.pitch + dpsi,
        frame_index=prev.frame_index + 1 if frame_index is None else frame_index,
        extrapolated=extrapolated,
    )


class Trajectory:
    """Ordered poses with strictly increasing frame indices."""

    def __init__(self, poses=()):
        self._poses: list[PoseState] = []
        for p in poses:
            self.append(p)

    def append(self, pose: PoseState) -> None:
        if self._poses and pose.frame_index <= self._poses[-1].frame_index:
            raise ValueError(
                f"frame index {pose.frame_index} does not follow {self._poses[-1].frame_index}")
        self._poses.append(pose)

    def __len__(self) -> int:
        return len(self._poses)

    def __getitem__(self, i):
        return self._poses[i]

    def __iter__(self):
        return iter(self._poses)

    def positions(self) -> np.ndarray:
        if not self._poses:
            return np.zeros((0, 3))
        return np.array([p.position for p in self._poses])

    def matrices(self) -> np.ndarray:
        return np.array([p.matrix() for p in self._poses]).reshape(-1, 4, 4)

    def reindexed(self) -> "Trajectory":
        return Trajectory(replace(p, frame_index=i) for i, p in enumerate(self._poses))

    def __repr__(self) -> str:
        return f"Trajectory(n={len(self)})"
