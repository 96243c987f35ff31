"""Imaging-sonar place recognition: polar descriptors, adaptive shift matching,
ICP loop factors and SE(2) pose-graph optimization, plus a synthetic sonar
simulator and evaluation harness."""

from .descriptor import PolarKey, SonarContext, make_context, make_polar_key
from .errors import SonarContextError
from .matching import MatchConfig, MatchResult, adaptive_match, column_distance, shift_context
from .points import PointCloud2D, SonarFrame, extract_points, make_frame, median_filter, otsu_threshold
from .polar_image import PolarImage, SensorModel, cartesian_of, polar_of
from .posegraph import PoseGraph
from .registration import IcpConfig, LoopFactor, icp_2d, make_loop_factor
from .retrieval import KeyIndex, RetrievalConfig
from .se2 import SE2

__version__ = "0.1.0"
