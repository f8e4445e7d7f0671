"""Landmark-based LiDAR odometry from the overlap of convex hull footprints."""
from . import core, dataio, hullgeom, maptools, odometry, preprocess

from .core import PointCloudFrame, PoseDelta2D, PoseState, Trajectory, accumulate_pose, apply_delta
from .hullgeom import (ConvexHull2D, SimilarityWeights, convex_hull_2d, hausdorff, intersect_convex,
                       polygon_area, similarity, turning_distance, turning_function)
from .odometry import Odometer, OdometryConfig, OptimizerConfig, optimize_pose, process_frame
from .preprocess import PreprocessConfig, preprocess_frame
from .maptools import VoxelMap, export_map, integrate_frame
from .dataio import eval_ae_sd_pete, eval_kitti, gen_synthetic_sequence, read_poses, read_scan_bin, write_poses

__version__ = "0.1.0"
