"""Synthetic experiment drivers shared by scripts/ and the acceptance tests.

Each driver simulates a scene, runs the pipeline and reduces the outcome to a
few numbers. Nothing here writes files.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .evaluation import (DetectionRecord, blind_traversal, make_record, operating_point,
                         trajectory_error, true_positive_ids)
from .matching import MatchConfig, adaptive_match
from .pipeline import PipelineResult, run_sequence
from .points import make_frame
from .polar_image import SensorModel
from .registration import IcpConfig, LoopFactor, make_loop_factor
from .se2 import SE2
from .simulator import (NoiseConfig, SimulatedSequence, World, WorldConfig, circular_route, frame_rng,
                        make_world, render_sonar, simulate)

ODOM_SIGMA_TRANS = 0.02
ODOM_SIGMA_YAW = 0.005


def revisit_sequence(yaw_deg: float = 0.0, lateral_m: float = 0.0, seed: int = 0,
                     frames_per_lap: int = 200, world: Optional[World] = None,
                     sensor: SensorModel = SensorModel(), noise: NoiseConfig = NoiseConfig()
                     ) -> SimulatedSequence:
    """Two noisy-odometry laps of the default route; lap two carries the scripted offset."""
    world = world if world is not None else make_world(WorldConfig())
    traj = circular_route(frames_per_lap=frames_per_lap, laps=2, revisit_yaw_deg=yaw_deg,
                          revisit_lateral_m=lateral_m, sigma_trans_per_m=ODOM_SIGMA_TRANS,
                          sigma_yaw_per_rad=ODOM_SIGMA_YAW, seed=seed)
    return simulate(world, traj, sensor, noise)


@dataclass
class RunSummary:
    precision: float
    recall: float
    tp: int
    detections: int
    rmse_odometry_m: float
    rmse_optimized_m: float
    max_gap_m: float
    records: List[DetectionRecord] = field(repr=False, default_factory=list)

    @property
    def rmse_ratio(self) -> float:
        return self.rmse_optimized_m / self.rmse_odometry_m


def summarize(seq: SimulatedSequence, res: PipelineResult, cfg: RunConfig = RunConfig()) -> RunSummary:
    gt = seq.ground_truth
    tp_m = cfg.eval.tp_distance_m
    gap = cfg.retrieval.exclusion_gap
    recs = [make_record(r.query_id, r.cand_id, r.distance, gt, r.accepted) for r in res.best_matches()]
    op = operating_point(recs, gt, cfg.matching.accept_threshold, tp_m, gap)
    bt = blind_traversal(true_positive_ids(recs, tp_m), gt)
    return RunSummary(op.precision, op.recall, op.tp, op.detections,
                      trajectory_error(seq.odometry, gt).rmse_m,
                      trajectory_error(res.optimized_poses(), gt).rmse_m, bt.max_gap_m, recs)


def run_and_summarize(seq: SimulatedSequence, cfg: RunConfig = RunConfig()):
    res = run_sequence(seq.images, seq.sensor, seq.odometry, seq.timestamps, cfg)
    return res, summarize(seq, res, cfg)


def degraded_config(cfg: RunConfig = RunConfig()) -> RunConfig:
    """Shifting switched off: both bounds collapse to a zero shift."""
    m = cfg.matching
    return cfg.replace(matching=MatchConfig(0.01, 0.01, m.accept_threshold, m.min_valid_columns))


# -- ICP seeding study --------------------------------------------------------

@dataclass(frozen=True)
class SeedingTrial:
    yaw_deg: float
    seeded_ok: bool
    identity_ok: bool
    seeded_converged: bool
    identity_converged: bool


def registration_ok(f, truth: SE2, max_trans_m: float = 1.0, max_yaw_deg: float = 3.0) -> bool:
    """Accepted factor whose measurement lands near the true relative pose."""
    if not isinstance(f, LoopFactor):
        return False
    z = f.measurement
    yaw_err = math.degrees(abs(math.remainder(z.yaw - truth.yaw, 2 * math.pi)))
    return math.hypot(z.x - truth.x, z.y - truth.y) <= max_trans_m and yaw_err <= max_yaw_deg


def icp_seeding_study(yaws_deg: Sequence[float] = (20, 25, 30, 35, 40), per_cell: int = 10, seed: int = 0,
                      world: Optional[World] = None, sensor: SensorModel = SensorModel(),
                      noise: NoiseConfig = NoiseConfig(), icp_cfg: IcpConfig = IcpConfig(),
                      max_offset_m: float = 1.0) -> List[SeedingTrial]:
    """Register revisit pairs with a matcher-derived seed and with identity.

    Poses are drawn inside the world; the candidate is the query rotated by
    the cell's yaw (random sign) and moved up to ``max_offset_m``. Both arms
    run ICP on every pair regardless of the matcher's accept decision.
    """
    world = world if world is not None else make_world(WorldConfig())
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = world.bounds
    out = []
    k = 0
    for yaw in yaws_deg:
        for _ in range(per_cell):
            q = SE2(rng.uniform(xmin + 50, xmax - 50), rng.uniform(ymin + 50, ymax - 50),
                    rng.uniform(-math.pi, math.pi))
            off = SE2(*(rng.uniform(-1, 1, 2) * max_offset_m / math.sqrt(2)),
                      math.radians(yaw) * rng.choice([-1.0, 1.0]))
            c = q @ off
            fq = make_frame(render_sonar(world, q, sensor, noise, frame_rng(seed, 2 * k)), sensor, frame_id=1)
            fc = make_frame(render_sonar(world, c, sensor, noise, frame_rng(seed, 2 * k + 1)), sensor, frame_id=0)
            k += 1
            m = dataclasses.replace(adaptive_match(fq.context, fc.context), accepted=True)
            seeded = make_loop_factor(fq, fc, m, icp_cfg)
            ident = make_loop_factor(fq, fc, m, icp_cfg, init=SE2())
            out.append(SeedingTrial(float(yaw), registration_ok(seeded, off), registration_ok(ident, off),
                                    isinstance(seeded, LoopFactor), isinstance(ident, LoopFactor)))
    return out


def seeding_rates(trials: Sequence[SeedingTrial]) -> Dict[float, Dict[str, float]]:
    cells: Dict[float, List[SeedingTrial]] = {}
    for t in trials:
        cells.setdefault(t.yaw_deg, []).append(t)
    return {y: {"seeded": float(np.mean([t.seeded_ok for t in ts])),
                "identity": float(np.mean([t.identity_ok for t in ts])),
                "n": len(ts)} for y, ts in sorted(cells.items())}
