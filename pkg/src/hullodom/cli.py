"""Command line driver: ``run``, ``eval``, ``synth`` and ``map-export``.

Exit codes: 0 success, 1 usage error, 2 bad or missing data, 3 internal error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import dataio
from .core import PoseDelta2D, PoseState, Trajectory, accumulate_pose
from .maptools import GROUND_LABEL, VoxelMap, export_map, integrate_frame
from .odometry import LAYER_MODES, Odometer, OdometryConfig
from .preprocess import match_clusters, preprocess_frame

log = logging.getLogger("hullodom")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything ``run`` needs; built from a config file and then flag overrides."""

    input: str | None = None
    output: str | None = None
    odometry: OdometryConfig = field(default_factory=OdometryConfig)
    voxel_size: float | None = None
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    seed: int = 0
    plot: bool = False


def _update(obj, values: dict, where: str):
    known = {f.name for f in fields(obj)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"{where}: unknown keys {', '.join(unknown)}")
    try:
        return replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{where}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Parse a YAML run configuration.

    Top-level keys: ``preprocess``, ``weights``, ``optimizer``, ``odometry``
    (sections mapping onto the config dataclasses), ``voxel_size`` and
    ``threads``.
    """
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config {path}: expected a mapping at top level")
    allowed = {"preprocess", "weights", "optimizer", "odometry", "voxel_size", "threads"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise UsageError(f"config {path}: unknown keys {', '.join(unknown)}")
    odo = OdometryConfig()
    pre = _update(odo.preprocess, doc.get("preprocess", {}), "preprocess")
    weights = _update(odo.weights, doc.get("weights", {}), "weights")
    opt = _update(odo.optimizer, doc.get("optimizer", {}), "optimizer")
    odo = _update(odo, doc.get("odometry", {}), "odometry")
    odo = replace(odo, preprocess=pre, weights=weights, optimizer=opt)
    cfg = RunConfig(odometry=odo)
    if "voxel_size" in doc:
        cfg.voxel_size = float(doc["voxel_size"])
    if "threads" in doc:
        cfg.threads = int(doc["threads"])
    return cfg


def build_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg.input, cfg.output = args.input, args.output
    odo = cfg.odometry
    opt = odo.optimizer
    if args.step_mode:
        opt = replace(opt, step_mode=args.step_mode)
    if args.fixed_step is not None:
        opt = replace(opt, fixed_step=args.fixed_step)
    if args.signed_vertical:
        opt = replace(opt, signed_vertical_mode=True)
    if args.layer_mode:
        odo = replace(odo, layer_mode=args.layer_mode)
    if args.threads is not None:
        cfg.threads = args.threads
    if cfg.threads < 1:
        raise UsageError("--threads must be at least 1")
    pre = replace(odo.preprocess, workers=cfg.threads)
    cfg.odometry = replace(odo, optimizer=opt, preprocess=pre)
    if args.voxel is not None:
        cfg.voxel_size = args.voxel
    if cfg.voxel_size is not None and not cfg.voxel_size > 0:
        raise UsageError("--voxel must be positive")
    cfg.seed = args.seed
    cfg.plot = args.plot
    return cfg


# -- inputs ----------------------------------------------------------------------

def _is_scene(path: Path) -> bool:
    return path.is_file() and path.suffix.lower() in (".yaml", ".yml")


def iter_frames(source: str, seed: int = 0):
    """Frames from a scan directory (``*.bin``) or a synthetic scene document."""
    path = Path(source)
    if not path.exists():
        raise DataError(f"input {source} does not exist")
    if _is_scene(path):
        try:
            spec = dataio.load_scene(path)
        except ValueError as exc:
            raise DataError(f"{source}: {exc}") from exc
        yield from dataio.gen_synthetic_sequence(spec, seed).frames
        return
    scans = dataio.scan_paths(path)
    if not scans:
        raise DataError(f"no .bin scans found in {source}")
    for i, p in enumerate(scans):
        try:
            yield dataio.read_scan_bin(p, i)
        except dataio.MalformedFileError as exc:
            raise DataError(str(exc)) from exc


def labeled_points(odo: Odometer):
    """Ground and clustered points of the frame just processed, with map labels."""
    pts = [odo.ground]
    labels = [np.full(len(odo.ground), GROUND_LABEL)]
    for c, t in zip(odo.clusters, odo.tracks):
        pts.append(c.points)
        labels.append(np.full(len(c.points), t))
    return np.concatenate(pts), np.concatenate(labels)


# -- commands --------------------------------------------------------------------

def cmd_run(cfg: RunConfig) -> dict:
    """Run the odometry over every frame, writing poses, timing and extrapolation logs."""
    if not cfg.input or not cfg.output:
        raise UsageError("run needs --input and --output")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    odo = Odometer(cfg.odometry)
    vmap = VoxelMap(cfg.voxel_size) if cfg.voxel_size else None
    traj = Trajectory()
    totals = {"preprocess": 0.0, "odometry": 0.0, "mapping": 0.0}
    extrapolated = []
    n = 0
    for frame in iter_frames(cfg.input, cfg.seed):
        try:
            res = odo.process(frame)
        except ValueError as exc:
            # keep going on constant velocity; the pose is flagged like any other fallback
            log.warning("frame %d failed (%s); extrapolating", frame.index, exc)
            prev = odo.pose or PoseState(frame_index=frame.index - 1)
            odo.pose = accumulate_pose(prev, odo.last_delta, frame_index=frame.index,
                                       extrapolated=True)
            traj.append(odo.pose)
            extrapolated.append(frame.index)
            n += 1
            continue
        totals["preprocess"] += res.timings["preprocess"]
        totals["odometry"] += res.timings["odometry"]
        if vmap is not None:
            t = time.perf_counter()
            pts, labels = labeled_points(odo)
            integrate_frame(vmap, pts, res.pose, labels)
            totals["mapping"] += time.perf_counter() - t
        if res.extrapolated:
            extrapolated.append(frame.index)
        traj.append(res.pose)
        n += 1
    dataio.write_poses(traj, out / "poses.txt")
    means = {k: 1000.0 * v / max(n, 1) for k, v in totals.items()}
    with open(out / "timing.txt", "w") as fh:
        fh.write(f"frames {n}\n")
        for k in ("preprocess", "odometry", "mapping"):
            fh.write(f"{k}_ms {means[k]:.3f}\n")
        fh.write(f"total_ms {sum(means.values()):.3f}\n")
    with open(out / "extrapolated.txt", "w") as fh:
        fh.writelines(f"{i}\n" for i in extrapolated)
    if vmap is not None:
        export_map(vmap, out / "map.txt")
    if cfg.plot and len(traj):
        (out / "trajectory.svg").write_text(trajectory_svg(traj))
        (out / "trajectory.csv").write_text(trajectory_csv(traj))
    log.info("%d frames, %d extrapolated", n, len(extrapolated))
    return {"frames": n, "extrapolated": extrapolated, "timing_ms": means}


def _read_traj(path) -> Trajectory:
    try:
        return dataio.read_poses(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except dataio.MalformedFileError as exc:
        raise DataError(f"{path}: {exc}") from exc


def trajectory_svg(est: Trajectory, gt: Trajectory | None = None, size: int = 600) -> str:
    """Top-down view of an estimate, optionally over ground truth, as an SVG document."""
    a = est.positions()[:, :2]
    b = gt.positions()[:, :2] if gt is not None else np.zeros((0, 2))
    both = np.vstack([a, b])
    lo, hi = both.min(axis=0), both.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    pad = 20
    scale = (size - 2 * pad) / span

    def poly(p, colour):
        xy = (p - lo) * scale + pad
        pts = " ".join(f"{x:.2f},{size - y:.2f}" for x, y in xy)
        return f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>'

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             '<rect width="100%" height="100%" fill="white"/>']
    if len(b):
        lines.append(poly(b, "black"))
    lines.append(poly(a, "red"))
    legend = "black: ground truth, red: estimate" if len(b) else "estimate"
    lines += [f'<text x="{pad}" y="{pad}" font-size="12">{legend}</text>', "</svg>"]
    return "\n".join(lines) + "\n"


def trajectory_csv(est: Trajectory, gt: Trajectory | None = None) -> str:
    cols = ["frame", "est_x", "est_y", "est_z"] + (["gt_x", "gt_y", "gt_z"] if gt else [])
    rows = [",".join(cols)]
    ref = gt.positions() if gt else [()] * len(est)
    for i, (p, q) in enumerate(zip(est.positions(), ref)):
        rows.append(f"{i}," + ",".join(f"{v:.6f}" for v in (*p, *q)))
    return "\n".join(rows) + "\n"


def cmd_eval(est_path, gt_path, output=None, plot=False, planar=False) -> dataio.MetricReport:
    est, gt = _read_traj(est_path), _read_traj(gt_path)
    if len(est) != len(gt):
        raise DataError(f"length mismatch: {est_path} has {len(est)} poses, "
                        f"{gt_path} has {len(gt)}")
    try:
        report = dataio.evaluate(est, gt, planar=planar)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(report.to_text(), end="")
    if output:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(report.to_text())
        (out / "metrics.csv").write_text(report.to_csv())
        if plot:
            (out / "trajectory.svg").write_text(trajectory_svg(est, gt))
            (out / "trajectory.csv").write_text(trajectory_csv(est, gt))
    return report


def cmd_synth(scene_path, output, seed=0) -> int:
    """Render a scene document to ``velodyne/NNNNNN.bin`` scans plus ``poses.txt``."""
    try:
        spec = dataio.load_scene(scene_path)
    except OSError as exc:
        raise DataError(f"cannot read {scene_path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{scene_path}: {exc}") from exc
    seq = dataio.gen_synthetic_sequence(spec, seed)
    out = Path(output)
    scans = out / "velodyne"
    scans.mkdir(parents=True, exist_ok=True)
    for f in seq.frames:
        dataio.write_scan_bin(f.points, scans / f"{f.index:06d}.bin")
    dataio.write_poses(seq.trajectory, out / "poses.txt")
    return len(seq.frames)


def cmd_map_export(scan_dir, poses_path, output, voxel_size=0.2, cfg: OdometryConfig | None = None,
                   seed: int = 0) -> VoxelMap:
    """Voxel map from scans and known poses, landmarks labelled by tracking matched clusters."""
    cfg = cfg or OdometryConfig()
    traj = _read_traj(poses_path)
    frames = list(iter_frames(scan_dir, seed))
    if len(frames) != len(traj):
        raise DataError(f"{len(frames)} scans but {len(traj)} poses")
    vmap = VoxelMap(voxel_size)
    prev, prev_tracks, prev_pose, next_track = [], [], None, 0
    for frame, pose in zip(frames, traj):
        split, clusters = preprocess_frame(frame, cfg.preprocess)
        predict = None
        if prev_pose is not None:
            rel = np.linalg.inv(prev_pose.matrix()) @ pose.matrix()
            predict = PoseDelta2D(rel[0, 3], rel[1, 3], float(np.arctan2(rel[1, 0], rel[0, 0])))
        matches = match_clusters(prev, clusters, predict=predict, floor=cfg.match_floor)
        by_prev = dict(zip((c.id for c in prev), prev_tracks))
        inherited = {m.curr.id: by_prev[m.prev.id] for m in matches}
        tracks = []
        for c in clusters:
            if c.id not in inherited:
                inherited[c.id] = next_track
                next_track += 1
            tracks.append(inherited[c.id])
        integrate_frame(vmap, split.ground, pose, np.full(len(split.ground), GROUND_LABEL))
        for c, t in zip(clusters, tracks):
            integrate_frame(vmap, c.points, pose, np.full(len(c.points), t))
        prev, prev_tracks, prev_pose = clusters, tracks, pose
    export_map(vmap, output)
    return vmap


# -- argument parsing ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hullodom", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="estimate poses for a scan directory or scene document")
    run.add_argument("--input", required=True, help="directory of .bin scans, or a scene .yaml")
    run.add_argument("--output", required=True, help="output directory")
    run.add_argument("--config", help="YAML run configuration")
    run.add_argument("--layer-mode", choices=LAYER_MODES)
    run.add_argument("--step-mode", choices=("adaptive", "fixed"))
    run.add_argument("--fixed-step", type=float, help="fixed step in units of the axis coefficient")
    run.add_argument("--signed-vertical", action="store_true", help="allow negative height change")
    run.add_argument("--voxel", type=float, help="voxel size in meters; also writes map.txt")
    run.add_argument("--threads", type=int)
    run.add_argument("--seed", type=int, default=0, help="noise seed for scene inputs")
    run.add_argument("--plot", action="store_true", help="also write trajectory.svg and .csv")

    ev = sub.add_parser("eval", help="compare an estimated pose file with ground truth")
    ev.add_argument("--input", required=True, help="estimated poses")
    ev.add_argument("--gt", required=True, help="ground-truth poses")
    ev.add_argument("--output", help="directory for metrics.txt / metrics.csv")
    ev.add_argument("--plot", action="store_true", help="also write trajectory.svg and .csv")
    ev.add_argument("--planar", action="store_true", help="horizontal position error only")

    sy = sub.add_parser("synth", help="render a scene document to scans and poses")
    sy.add_argument("--input", required=True, help="scene .yaml")
    sy.add_argument("--output", required=True)
    sy.add_argument("--seed", type=int, default=0)

    mp = sub.add_parser("map-export", help="build a labelled voxel map from scans and poses")
    mp.add_argument("--input", required=True, help="scan directory or scene .yaml")
    mp.add_argument("--poses", required=True)
    mp.add_argument("--output", required=True, help="map file")
    mp.add_argument("--voxel", type=float, default=0.2)
    mp.add_argument("--config", help="YAML run configuration")
    mp.add_argument("--threads", type=int)
    mp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = build_run_config(args)
            summary = cmd_run(cfg)
            t = summary["timing_ms"]
            print(f"frames {summary['frames']}  extrapolated {len(summary['extrapolated'])}  "
                  f"preprocess {t['preprocess']:.1f} ms  odometry {t['odometry']:.1f} ms  "
                  f"mapping {t['mapping']:.1f} ms")
        elif args.command == "eval":
            cmd_eval(args.input, args.gt, args.output, args.plot, args.planar)
        elif args.command == "synth":
            n = cmd_synth(args.input, args.output, args.seed)
            print(f"wrote {n} frames to {args.output}")
        elif args.command == "map-export":
            if not args.voxel > 0:
                raise UsageError("--voxel must be positive")
            cfg = load_config(args.config) if args.config else RunConfig()
            odo = cfg.odometry
            if args.threads is not None:
                odo = replace(odo, preprocess=replace(odo.preprocess, workers=args.threads))
            vmap = cmd_map_export(args.input, args.poses, args.output, args.voxel, odo, args.seed)
            print(f"wrote {len(vmap)} voxels to {args.output}")
    except UsageError as exc:
        print(f"hullodom: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, dataio.InsufficientLengthError) as exc:
        print(f"hullodom: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"hullodom: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"hullodom: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
