"""End-to-end loop-closure pipeline over a sequence of polar images.

describe (context + key, point cloud) -> retrieve -> adaptive match ->
ICP verification -> pose graph. Everything is processed in frame order so
the logs are deterministic regardless of ``workers``.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .config import PoseGraphConfig, RunConfig
from .errors import FormatError
from .matching import MatchConfig, MatchResult, adaptive_match
from .points import PointConfig, SonarFrame, make_frame
from .polar_image import PolarImage, SensorModel
from .posegraph import OptimizeResult, PoseGraph
from .registration import IcpConfig, LoopFactor, LoopRejection, make_loop_factor
from .retrieval import KeyIndex, RetrievalConfig
from .se2 import SE2

log = logging.getLogger(__name__)

MATCH_HEADER = ["query_id", "cand_id", "distance", "n_shift", "m_shift", "accepted"]
FACTOR_HEADER = ["id_i", "id_j", "dx", "dy", "dyaw", "rms", "accepted", "reason"]


@dataclass(frozen=True)
class MatchRow:
    query_id: int
    cand_id: int
    result: MatchResult

    @property
    def distance(self) -> float:
        return self.result.distance

    @property
    def accepted(self) -> bool:
        return self.result.accepted


@dataclass
class PipelineResult:
    frames: List[SonarFrame]
    matches: List[MatchRow]
    factors: List[Union[LoopFactor, LoopRejection]]
    graph: PoseGraph
    optimized: OptimizeResult
    odometry: List[SE2]
    index: KeyIndex = field(repr=False, default=None)

    def best_matches(self) -> List[MatchRow]:
        """Lowest-distance candidate per query (ties: smaller cand id)."""
        best: Dict[int, MatchRow] = {}
        for row in self.matches:
            cur = best.get(row.query_id)
            if cur is None or (row.distance, row.cand_id) < (cur.distance, cur.cand_id):
                best[row.query_id] = row
        return [best[q] for q in sorted(best)]

    @property
    def loop_factors(self) -> List[LoopFactor]:
        return [f for f in self.factors if isinstance(f, LoopFactor)]

    def optimized_poses(self) -> List[SE2]:
        return [self.optimized.poses[k] for k in range(len(self.frames))]


def describe_frames(images: Sequence[PolarImage], sensor: SensorModel, odometry: Sequence[SE2],
                    timestamps: Sequence[float], point_cfg: PointConfig = PointConfig(),
                    patch=(4, 4), workers: int = 1) -> List[SonarFrame]:
    """Descriptor and point cloud for every image; ``workers`` > 1 runs frames concurrently."""
    def one(k):
        return make_frame(images[k], sensor, point_cfg, k, timestamps[k], odometry[k], patch)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, range(len(images))))
    return [one(k) for k in range(len(images))]


def detect_loops(frames: Sequence[SonarFrame], retrieval_cfg: RetrievalConfig = RetrievalConfig(),
                 match_cfg: MatchConfig = MatchConfig(), index: Optional[KeyIndex] = None
                 ) -> List[MatchRow]:
    """Query each frame against the earlier ones, then add it to the index."""
    index = index if index is not None else KeyIndex()
    rows = []
    for f in frames:
        for cand_id, _ in index.query(f.frame_id, f.polar_key, retrieval_cfg):
            res = adaptive_match(f.context, frames[cand_id].context, match_cfg)
            rows.append(MatchRow(f.frame_id, cand_id, res))
        index.insert(f.frame_id, f.polar_key)
    return rows


def close_loops(frames: Sequence[SonarFrame], matches: Sequence[MatchRow], icp_cfg: IcpConfig = IcpConfig(),
                seeded: bool = True) -> List[Union[LoopFactor, LoopRejection]]:
    """ICP-verify every accepted match; ``seeded=False`` starts ICP from identity."""
    out = []
    for row in matches:
        if not row.accepted:
            continue
        init = None if seeded else SE2()
        out.append(make_loop_factor(frames[row.query_id], frames[row.cand_id], row.result, icp_cfg, init))
    return out


def odometry_information(z: SE2, cfg: PoseGraphConfig = PoseGraphConfig()) -> np.ndarray:
    st = max(cfg.odom_sigma_trans_per_m * z.translation_norm(), cfg.odom_sigma_trans_floor_m)
    sy = max(cfg.odom_sigma_yaw_per_rad * abs(z.yaw), cfg.odom_sigma_yaw_floor_rad)
    return np.diag([1 / st ** 2, 1 / st ** 2, 1 / sy ** 2])


def build_graph(odometry: Sequence[SE2], factors: Sequence[Union[LoopFactor, LoopRejection]],
                cfg: PoseGraphConfig = PoseGraphConfig()) -> PoseGraph:
    g = PoseGraph()
    if not odometry:
        return g
    g.add_node(0, odometry[0])
    for k in range(len(odometry) - 1):
        z = odometry[k].between(odometry[k + 1])
        g.add_odom_factor(k, k + 1, z, odometry_information(z, cfg))
    for f in factors:
        if isinstance(f, LoopFactor):
            g.add_loop_factor(f)
    return g


def run_sequence(images: Sequence[PolarImage], sensor: SensorModel, odometry: Sequence[SE2],
                 timestamps: Sequence[float], cfg: RunConfig = RunConfig()) -> PipelineResult:
    patch = (cfg.descriptor.p_w, cfg.descriptor.p_h)
    frames = describe_frames(images, sensor, odometry, timestamps, cfg.points, patch, cfg.workers)
    index = KeyIndex()
    matches = detect_loops(frames, cfg.retrieval, cfg.matching, index)
    factors = close_loops(frames, matches, cfg.icp)
    graph = build_graph(odometry, factors, cfg.posegraph)
    pg = cfg.posegraph
    opt = graph.optimize(pg.max_iter, pg.tol, pg.huber_delta)
    n_loops = sum(isinstance(f, LoopFactor) for f in factors)
    log.info("%d frames, %d matches, %d accepted, %d loop factors", len(frames), len(matches),
             sum(m.accepted for m in matches), n_loops)
    return PipelineResult(frames, matches, factors, graph, opt, list(odometry), index)


# -- logs --------------------------------------------------------------------

def write_matches(rows: Sequence[MatchRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MATCH_HEADER)
        for r in rows:
            w.writerow([r.query_id, r.cand_id, repr(r.distance), r.result.col_shift_n,
                        r.result.row_shift_m, int(r.accepted)])


def read_matches(path) -> List[dict]:
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        if rd.fieldnames != MATCH_HEADER:
            raise FormatError(f"{path}: expected header {','.join(MATCH_HEADER)}")
        return [{"query_id": int(r["query_id"]), "cand_id": int(r["cand_id"]),
                 "distance": float(r["distance"]), "n_shift": int(r["n_shift"]),
                 "m_shift": int(r["m_shift"]), "accepted": r["accepted"] == "1"} for r in rd]


def write_factors(factors: Sequence[Union[LoopFactor, LoopRejection]], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(FACTOR_HEADER)
        for fac in factors:
            if isinstance(fac, LoopFactor):
                z = fac.measurement
                w.writerow([fac.id_i, fac.id_j, repr(z.x), repr(z.y), repr(z.yaw), repr(fac.rms_m), 1, ""])
            else:
                icp = fac.icp
                if icp is None:
                    w.writerow([fac.id_i, fac.id_j, "", "", "", "", 0, fac.reason])
                else:
                    z = icp.transform
                    w.writerow([fac.id_i, fac.id_j, repr(z.x), repr(z.y), repr(z.yaw), repr(icp.rms_m), 0,
                                fac.reason])


def write_cloud(frame: SonarFrame, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x_m", "y_m", "intensity"])
        for (x, y), i in zip(frame.cloud.points, frame.cloud.intensities):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(i))])


def write_context(frame: SonarFrame, path) -> None:
    # rows = range bins, columns = azimuth bins
    np.savetxt(path, frame.context.values, delimiter=",", fmt="%.17g")


def dump_frames(frames: Sequence[SonarFrame], out_dir, contexts: bool = False, clouds: bool = False) -> None:
    out = Path(out_dir)
    if contexts:
        (out / "contexts").mkdir(parents=True, exist_ok=True)
    if clouds:
        (out / "clouds").mkdir(parents=True, exist_ok=True)
    for fr in frames:
        if contexts:
            write_context(fr, out / "contexts" / f"frame_{fr.frame_id:06d}.csv")
        if clouds:
            write_cloud(fr, out / "clouds" / f"frame_{fr.frame_id:06d}.csv")
