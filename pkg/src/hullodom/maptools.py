"""World-frame voxel map built from per-frame points and poses."""
from __future__ import annotations

from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from .core import PoseState, as_points

GROUND_LABEL = -1
HEADER = "# x y z label\n"


class VoxelMap:
    """Sparse voxel grid with a point count and a label tally per cell.

    A cell's label is the most frequent label among its points; ties go to
    the smallest label.
    """

    def __init__(self, voxel_size: float = 0.2):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        self.voxel_size = float(voxel_size)
        self._labels: dict[tuple, Counter] = defaultdict(Counter)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, key) -> bool:
        return tuple(key) in self._labels

    @property
    def total_points(self) -> int:
        return sum(sum(c.values()) for c in self._labels.values())

    def count(self, key) -> int:
        return sum(self._labels[tuple(key)].values()) if tuple(key) in self._labels else 0

    def label(self, key) -> int:
        tally = self._labels[tuple(key)]
        best = max(tally.values())
        return min(k for k, v in tally.items() if v == best)

    def keys(self) -> list[tuple]:
        return sorted(self._labels)

    def cells(self) -> dict:
        """``{index: (count, label)}`` for every occupied voxel."""
        return {k: (self.count(k), self.label(k)) for k in self.keys()}

    def index_of(self, points) -> np.ndarray:
        return np.floor(as_points(points, 3) / self.voxel_size).astype(np.int64)

    def center(self, key) -> np.ndarray:
        return (np.asarray(key, dtype=float) + 0.5) * self.voxel_size

    def add_world_points(self, points, labels=None) -> None:
        idx = self.index_of(points)
        if labels is None:
            labels = np.full(len(idx), GROUND_LABEL)
        labels = np.asarray(labels, dtype=int)
        if len(idx) == 0:
            return
        keys, inverse = np.unique(np.column_stack([idx, labels]), axis=0, return_inverse=True)
        counts = np.bincount(inverse.reshape(-1), minlength=len(keys))
        for (i, j, k, lab), n in zip(keys.tolist(), counts.tolist()):
            self._labels[(i, j, k)][lab] += n


def integrate_frame(vmap: VoxelMap, points, pose: PoseState, labels=None) -> VoxelMap:
    """Transform vehicle-frame ``points`` by ``pose`` and add them to ``vmap`` (in place)."""
    vmap.add_world_points(pose.transform_points(points), labels)
    return vmap


def export_map(vmap: VoxelMap, path) -> None:
    """Write one ``x y z label`` line per voxel center, ordered by voxel index."""
    path = Path(path)
    try:
        with open(path, "w") as fh:
            fh.write(HEADER)
            for key in vmap.keys():
                c = vmap.center(key)
                fh.write("%.6f %.6f %.6f %d\n" % (c[0], c[1], c[2], vmap.label(key)))
    except OSError as exc:
        raise OSError(f"cannot write voxel map to {path}: {exc}") from exc


def read_map(path, voxel_size: float) -> dict:
    """Parse an exported map back into ``{index: label}``."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            x, y, z, lab = line.split()
            key = tuple(int(np.floor(float(v) / voxel_size)) for v in (x, y, z))
            out[key] = int(lab)
    return out
