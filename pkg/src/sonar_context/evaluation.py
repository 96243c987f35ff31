"""Place-recognition and SLAM metrics: PR sweep, overlap histograms,
blind traversal and trajectory error."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateDatasetError, ParameterError
from .se2 import SE2

ROTATION_BIN_DEG = 10.0
TRANSLATION_BIN_M = 1.0

RECALL_DEFINITION = ("recall = TP / number of queries that have at least one ground-truth pose "
                     "within tp_distance_m among frames id <= query_id - exclusion_gap")
PRECISION_DEFINITION = "precision = TP / detections; reported as 1.0 when there are no detections"


def default_tau_grid() -> Tuple[float, ...]:
    return tuple(round(0.01 * k, 2) for k in range(101))


@dataclass(frozen=True)
class EvalConfig:
    tp_distance_m: float = 3.0
    tau_grid: Tuple[float, ...] = field(default_factory=default_tau_grid)

    def __post_init__(self):
        if not self.tp_distance_m > 0:
            raise ParameterError("tp_distance_m must be > 0")
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        if not self.tau_grid:
            raise ParameterError("tau_grid must not be empty")


@dataclass(frozen=True)
class DetectionRecord:
    query_id: int
    cand_id: int
    distance: float
    gt_separation_m: float
    gt_rotation_deg: float
    accepted: bool = False


def make_record(query_id: int, cand_id: int, distance: float, gt: Sequence[SE2],
                accepted: bool = False) -> DetectionRecord:
    rel = gt[query_id].between(gt[cand_id])
    return DetectionRecord(query_id, cand_id, float(distance), rel.translation_norm(),
                           math.degrees(rel.yaw), accepted)


def revisit_queries(gt: Sequence[SE2], tp_distance_m: float, exclusion_gap: int) -> List[int]:
    """Query ids that have a ground-truth revisit among their admissible candidates."""
    xy = np.array([[p.x, p.y] for p in gt])
    out = []
    for q in range(len(gt)):
        last = q - exclusion_gap
        if last < 0:
            continue
        d = np.hypot(*(xy[: last + 1] - xy[q]).T)
        if d.min() <= tp_distance_m:
            out.append(q)
    return out


@dataclass(frozen=True)
class PRPoint:
    tau: float
    precision: float
    recall: float
    tp: int
    fp: int
    detections: int


def pr_curve(records: Iterable[DetectionRecord], gt: Sequence[SE2], cfg: EvalConfig = EvalConfig(),
             exclusion_gap: int = 50) -> List[PRPoint]:
    """Precision/recall of ``distance <= tau`` detections for every tau in the grid.

    ``records`` holds at most one (best) candidate per query.
    """
    recs = list(records)
    positives = len(revisit_queries(gt, cfg.tp_distance_m, exclusion_gap))
    if positives == 0:
        raise DegenerateDatasetError("degenerate dataset: no query has a ground-truth revisit")
    dist = np.array([r.distance for r in recs])
    good = np.array([r.gt_separation_m <= cfg.tp_distance_m for r in recs], dtype=bool)
    out = []
    for tau in cfg.tau_grid:
        det = dist <= tau if len(recs) else np.zeros(0, dtype=bool)
        n_det = int(det.sum())
        tp = int((det & good).sum())
        fp = n_det - tp
        precision = tp / n_det if n_det else 1.0
        out.append(PRPoint(tau, precision, tp / positives, tp, fp, n_det))
    return out


def operating_point(records: Iterable[DetectionRecord], gt: Sequence[SE2], tau: float,
                    tp_distance_m: float, exclusion_gap: int) -> PRPoint:
    return pr_curve(records, gt, EvalConfig(tp_distance_m, (tau,)), exclusion_gap)[0]


def true_positive_ids(records: Iterable[DetectionRecord], tp_distance_m: float,
                      tau: Optional[float] = None) -> List[int]:
    """Queries detected (``accepted`` flag, or ``distance <= tau``) within the TP distance."""
    out = []
    for r in records:
        hit = r.accepted if tau is None else r.distance <= tau
        if hit and r.gt_separation_m <= tp_distance_m:
            out.append(r.query_id)
    return sorted(set(out))


@dataclass
class OverlapHistogram:
    rotation_edges: np.ndarray
    rotation_counts: np.ndarray
    translation_edges: np.ndarray
    translation_counts: np.ndarray

    def rows(self):
        for lo, hi, c in zip(self.rotation_edges[:-1], self.rotation_edges[1:], self.rotation_counts):
            yield "rotation_deg", float(lo), float(hi), int(c)
        for lo, hi, c in zip(self.translation_edges[:-1], self.translation_edges[1:], self.translation_counts):
            yield "translation_m", float(lo), float(hi), int(c)


def overlap_histogram(records: Iterable[DetectionRecord], max_translation_m: Optional[float] = None
                      ) -> OverlapHistogram:
    """Counts of |rotation| in 10 degree bins over [0, 180] and separation in 1 m bins."""
    recs = list(records)
    rot = np.array([abs(r.gt_rotation_deg) for r in recs], dtype=float)
    sep = np.array([r.gt_separation_m for r in recs], dtype=float)
    r_edges = np.arange(0.0, 180.0 + ROTATION_BIN_DEG, ROTATION_BIN_DEG)
    top = max_translation_m if max_translation_m is not None else (sep.max() if len(sep) else 0.0)
    n_t = max(1, int(math.floor(top / TRANSLATION_BIN_M)) + 1)
    t_edges = np.arange(n_t + 1) * TRANSLATION_BIN_M
    r_idx = np.minimum((rot // ROTATION_BIN_DEG).astype(int), len(r_edges) - 2)
    t_idx = np.minimum((sep // TRANSLATION_BIN_M).astype(int), n_t - 1)
    r_counts = np.bincount(r_idx, minlength=len(r_edges) - 1)
    t_counts = np.bincount(t_idx, minlength=n_t)
    return OverlapHistogram(r_edges, r_counts, t_edges, t_counts)


def arc_length(gt: Sequence[SE2]) -> np.ndarray:
    xy = np.array([[p.x, p.y] for p in gt]).reshape(-1, 2)
    steps = np.hypot(*np.diff(xy, axis=0).T) if len(xy) > 1 else np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(steps)])


@dataclass
class BlindTraversal:
    gaps_m: List[float]
    segments: List[Tuple[int, int]]
    max_gap_m: float


def blind_traversal(tp_query_ids: Iterable[int], gt: Sequence[SE2]) -> BlindTraversal:
    """Path length travelled between consecutive true-positive detections.

    Leading and trailing stretches (start to first detection, last detection
    to end) count as gaps unless they have zero length.
    """
    s = arc_length(gt)
    last = len(gt) - 1
    ids = sorted(set(int(i) for i in tp_query_ids))
    if not ids:
        return BlindTraversal([float(s[-1])], [(0, last)], float(s[-1]))
    marks = ids
    segments = []
    if marks[0] != 0:
        segments.append((0, marks[0]))
    segments += list(zip(marks[:-1], marks[1:]))
    if marks[-1] != last:
        segments.append((marks[-1], last))
    gaps = [float(s[b] - s[a]) for a, b in segments]
    return BlindTraversal(gaps, segments, max(gaps) if gaps else 0.0)


@dataclass
class TrajectoryError:
    errors_m: np.ndarray
    rmse_m: float


def trajectory_error(est: Sequence[SE2], gt: Sequence[SE2]) -> TrajectoryError:
    """Position error per frame after expressing both trajectories relative to their first pose."""
    if len(est) != len(gt):
        raise ParameterError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if not len(gt):
        return TrajectoryError(np.zeros(0), 0.0)
    e0, g0 = est[0].inverse(), gt[0].inverse()
    err = np.array([math.hypot((e0 @ e).x - (g0 @ g).x, (e0 @ e).y - (g0 @ g).y)
                    for e, g in zip(est, gt)])
    return TrajectoryError(err, float(np.sqrt(np.mean(err ** 2))))


# -- CSV writers -------------------------------------------------------------

def _writer(f):
    return csv.writer(f, lineterminator="\n")


def write_pr_curve(points: Sequence[PRPoint], path) -> None:
    with open(path, "w", newline="") as f:
        w = _writer(f)
        w.writerow(["tau", "precision", "recall", "tp", "fp", "detections"])
        for p in points:
            w.writerow([repr(p.tau), repr(p.precision), repr(p.recall), p.tp, p.fp, p.detections])


def write_overlap_histogram(hist: OverlapHistogram, path) -> None:
    with open(path, "w", newline="") as f:
        w = _writer(f)
        w.writerow(["axis", "bin_lo", "bin_hi", "count"])
        for axis, lo, hi, c in hist.rows():
            w.writerow([axis, repr(lo), repr(hi), c])


def write_blind_traversal(bt: BlindTraversal, path) -> None:
    with open(path, "w", newline="") as f:
        w = _writer(f)
        w.writerow(["start_frame", "end_frame", "gap_m"])
        for (a, b), g in zip(bt.segments, bt.gaps_m):
            w.writerow([a, b, repr(g)])


def write_trajectory_error(frame_ids: Sequence[int], columns: Dict[str, TrajectoryError], path) -> None:
    names = list(columns)
    with open(path, "w", newline="") as f:
        w = _writer(f)
        w.writerow(["frame_id"] + [f"{n}_error_m" for n in names])
        for k, fid in enumerate(frame_ids):
            w.writerow([fid] + [repr(float(columns[n].errors_m[k])) for n in names])
