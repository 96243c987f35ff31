"""Point-to-point 2-D ICP and XYH loop factors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .matching import MatchResult
from .points import PointCloud2D, SonarFrame
from .se2 import SE2

__all__ = ["SE2", "IcpConfig", "IcpResult", "LoopFactor", "LoopRejection", "best_fit_se2",
           "icp_2d", "make_loop_factor"]


@dataclass(frozen=True)
class IcpConfig:
    max_iter: int = 50
    tol_m: float = 1e-4
    max_corr_dist_m: float = 2.0
    rms_gate_m: float = 1.0
    sigma_floor_m: float = 0.05
    min_points: int = 3

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if self.tol_m <= 0 or self.max_corr_dist_m <= 0 or self.rms_gate_m <= 0 or self.sigma_floor_m <= 0:
            raise ParameterError("ICP tolerances, distances and sigma floor must be positive")
        if self.min_points < 3:
            raise ParameterError("min_points must be >= 3")


@dataclass(frozen=True)
class IcpResult:
    transform: SE2
    rms_m: float
    iterations: int
    converged: bool
    inlier_count: int
    rms_history: Tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class LoopFactor:
    id_i: int
    id_j: int
    measurement: SE2
    information: np.ndarray = field(repr=False)
    rms_m: float = 0.0

    def __post_init__(self):
        if self.id_i == self.id_j:
            raise ParameterError("loop factor must join two distinct frames")
        info = np.array(self.information, dtype=float)
        check_information(info)
        info.setflags(write=False)
        object.__setattr__(self, "information", info)


@dataclass(frozen=True)
class LoopRejection:
    id_i: int
    id_j: int
    reason: str
    icp: Optional[IcpResult] = None


def check_information(info: np.ndarray) -> None:
    if info.shape != (3, 3) or not np.allclose(info, info.T, rtol=0, atol=1e-12 * max(1.0, np.abs(info).max())):
        raise ParameterError("information matrix must be a symmetric 3x3 matrix")
    if not np.all(np.isfinite(info)) or np.linalg.eigvalsh(info).min() <= 0:
        raise ParameterError("information matrix must be positive definite")


def best_fit_se2(src: np.ndarray, dst: np.ndarray) -> SE2:
    """Least-squares SE2 mapping corresponded ``src`` points onto ``dst``."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    # 2x2 cross-covariance; optimal angle maximizes trace(R^T H)
    sxx = (a[:, 0] * b[:, 0]).sum()
    syy = (a[:, 1] * b[:, 1]).sum()
    sxy = (a[:, 0] * b[:, 1]).sum()
    syx = (a[:, 1] * b[:, 0]).sum()
    theta = np.arctan2(sxy - syx, sxx + syy)
    c, s = np.cos(theta), np.sin(theta)
    t = cd - np.array([c * cs[0] - s * cs[1], s * cs[0] + c * cs[1]])
    return SE2(t[0], t[1], theta)


def icp_2d(src: PointCloud2D, dst: PointCloud2D, init: SE2 = SE2(), max_iter: int = 50,
           tol_m: float = 1e-4, max_corr_dist_m: float = 2.0) -> IcpResult:
    """Align ``src`` onto ``dst`` starting from ``init``.

    Each iteration pairs every transformed source point with its nearest
    destination point within ``max_corr_dist_m`` and re-solves the rigid fit
    over those pairs. Convergence means the pose moved less than ``tol_m``
    (translation, and rotation as arc length at the cloud radius).

    ``rms_m`` is taken over the final inliers. ``rms_history`` tracks the
    gated error sqrt(mean(min(d^2, max_corr^2))) over all source points,
    which cannot increase from one iteration to the next.
    """
    s_pts = src.points if isinstance(src, PointCloud2D) else np.asarray(src, dtype=float)
    d_pts = dst.points if isinstance(dst, PointCloud2D) else np.asarray(dst, dtype=float)
    if len(s_pts) < 3 or len(d_pts) < 3:
        return IcpResult(init, float("inf"), 0, False, 0)
    tree = cKDTree(d_pts)
    radius = max(1.0, float(np.sqrt((s_pts ** 2).sum(axis=1)).max()))
    gate2 = max_corr_dist_m ** 2

    def associate(pose):
        dist, idx = tree.query(pose.apply(s_pts), distance_upper_bound=max_corr_dist_m)
        ok = np.isfinite(dist)
        gated = float(np.sqrt(np.mean(np.where(ok, np.minimum(dist, max_corr_dist_m) ** 2, gate2))))
        return dist, idx, ok, gated

    pose = init
    history: List[float] = []
    converged = False
    iterations = 0
    dist, idx, ok, gated = associate(pose)
    history.append(gated)
    while iterations < max_iter:
        if ok.sum() < 3:
            return IcpResult(pose, float("inf"), iterations, False, int(ok.sum()), tuple(history))
        iterations += 1
        new_pose = best_fit_se2(s_pts[ok], d_pts[idx[ok]])
        step = pose.inverse() @ new_pose
        pose = new_pose
        dist, idx, ok, gated = associate(pose)
        history.append(gated)
        if max(step.translation_norm(), abs(step.yaw) * radius) < tol_m:
            converged = True
            break
    inliers = int(ok.sum())
    rms = float(np.sqrt(np.mean(dist[ok] ** 2))) if inliers else float("inf")
    return IcpResult(pose, rms, iterations, converged and inliers >= 3, inliers, tuple(history))


def make_loop_factor(query: SonarFrame, cand: SonarFrame, match: MatchResult,
                     cfg: IcpConfig = IcpConfig(), init: Optional[SE2] = None
                     ) -> Union[LoopFactor, LoopRejection]:
    """Verify a matched pair with ICP and turn it into an XYH constraint.

    The measurement is the candidate pose in the query frame (id_i = query,
    id_j = candidate). ``init`` overrides the matcher-derived seed.
    """
    if not match.accepted:
        return LoopRejection(query.frame_id, cand.frame_id, "match not accepted")
    if len(query.cloud) < cfg.min_points or len(cand.cloud) < cfg.min_points:
        return LoopRejection(query.frame_id, cand.frame_id, "too few points")
    seed = match.init_pose if init is None else init
    res = icp_2d(cand.cloud, query.cloud, seed, cfg.max_iter, cfg.tol_m, cfg.max_corr_dist_m)
    if res.inlier_count < cfg.min_points:
        return LoopRejection(query.frame_id, cand.frame_id, "too few points", res)
    if not res.converged:
        return LoopRejection(query.frame_id, cand.frame_id, "not converged", res)
    if res.rms_m > cfg.rms_gate_m:
        return LoopRejection(query.frame_id, cand.frame_id, "rms gate", res)
    sigma = max(res.rms_m, cfg.sigma_floor_m)
    return LoopFactor(query.frame_id, cand.frame_id, res.transform, np.eye(3) / sigma ** 2, res.rms_m)
