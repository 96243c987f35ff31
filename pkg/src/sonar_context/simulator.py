"""Deterministic synthetic forward-looking sonar datasets.

Worlds are flat sets of point scatterers (rocks are filled disks, ridges are
thick line segments). Every frame renders from its own PCG64 substream keyed
by (seed, frame index), so frames can be produced in any order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .polar_image import (PolarImage, PoseRecord, SensorModel, ensure_dir, polar_of_array,
                          save_image, write_poses, write_sensor)
from .se2 import SE2

_RENDER_STREAM = 1
_ODOM_STREAM = 2


@dataclass(frozen=True)
class NoiseConfig:
    r_ref_m: float = 20.0
    speckle_weight: float = 0.3
    noise_floor: float = 0.02
    blob_sigma_px: float = 1.0

    def __post_init__(self):
        if self.r_ref_m <= 0:
            raise ParameterError("r_ref_m must be positive")
        if not (0.0 <= self.speckle_weight <= 1.0):
            raise ParameterError("speckle_weight must be in [0, 1]")
        if self.noise_floor < 0 or self.blob_sigma_px < 0:
            raise ParameterError("noise_floor and blob_sigma_px must be >= 0")

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls(speckle_weight=0.0, noise_floor=0.0)


@dataclass(frozen=True, eq=False)
class World:
    scatterers: np.ndarray = field(repr=False)   # (N, 3): x, y, reflectivity
    bounds: Tuple[float, float, float, float] = (-100.0, -100.0, 100.0, 100.0)

    def __post_init__(self):
        s = np.array(self.scatterers, dtype=float).reshape(-1, 3)
        xmin, ymin, xmax, ymax = self.bounds
        if len(s):
            if np.any(s[:, 2] <= 0) or np.any(s[:, 2] > 1):
                raise ParameterError("reflectivity must be in (0, 1]")
            if (s[:, 0].min() < xmin or s[:, 0].max() > xmax
                    or s[:, 1].min() < ymin or s[:, 1].max() > ymax):
                raise ParameterError("scatterers outside world bounds")
        s.setflags(write=False)
        object.__setattr__(self, "scatterers", s)
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    @classmethod
    def empty(cls) -> "World":
        return cls(np.zeros((0, 3)))

    def to_dict(self) -> dict:
        return {"bounds": list(self.bounds), "scatterers": self.scatterers.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        return cls(np.array(d["scatterers"], dtype=float).reshape(-1, 3), tuple(d["bounds"]))


@dataclass(frozen=True)
class WorldConfig:
    half_extent_m: float = 100.0
    n_rocks: int = 150
    n_ridges: int = 25
    rock_radius_m: Tuple[float, float] = (0.5, 2.5)
    ridge_length_m: Tuple[float, float] = (5.0, 20.0)
    ridge_width_m: float = 0.4
    spacing_m: float = 0.15
    texture_density_per_m2: float = 0.5
    texture_patches: int = 0
    texture_patch_radius_m: Tuple[float, float] = (1.0, 3.0)
    texture_reflectivity: Tuple[float, float] = (0.05, 0.35)
    seed: int = 0


def make_world(cfg: WorldConfig = WorldConfig()) -> World:
    """Random rocks, ridges and weak seabed texture scattered uniformly over a square."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 0])))
    e = cfg.half_extent_m
    parts = []
    for _ in range(cfg.n_rocks):
        rad = rng.uniform(*cfg.rock_radius_m)
        m = rad + cfg.spacing_m
        cx, cy = rng.uniform(-e + m, e - m, size=2)
        refl = rng.uniform(0.4, 1.0)
        g = np.arange(-rad, rad + 1e-9, cfg.spacing_m)
        gx, gy = np.meshgrid(g, g)
        inside = gx ** 2 + gy ** 2 <= rad ** 2
        pts = np.column_stack([gx[inside], gy[inside]])
        pts += rng.uniform(-0.3, 0.3, size=pts.shape) * cfg.spacing_m
        parts.append(np.column_stack([pts + [cx, cy], np.full(len(pts), refl)]))
    for _ in range(cfg.n_ridges):
        length = rng.uniform(*cfg.ridge_length_m)
        m = length / 2 + cfg.ridge_width_m
        cx, cy = rng.uniform(-e + m, e - m, size=2)
        ang = rng.uniform(0, math.pi)
        refl = rng.uniform(0.4, 1.0)
        s = np.arange(-length / 2, length / 2, cfg.spacing_m)
        w = np.arange(-cfg.ridge_width_m / 2, cfg.ridge_width_m / 2 + 1e-9, cfg.spacing_m)
        ss, ww = np.meshgrid(s, w)
        d = np.array([math.cos(ang), math.sin(ang)])
        nrm = np.array([-d[1], d[0]])
        pts = ss.reshape(-1, 1) * d + ww.reshape(-1, 1) * nrm + [cx, cy]
        parts.append(np.column_stack([pts, np.full(len(pts), refl)]))
    n_tex = int(round(cfg.texture_density_per_m2 * (2 * e) ** 2))
    if n_tex:
        tex = rng.uniform(-e, e, size=(n_tex, 2))
        parts.append(np.column_stack([tex, rng.uniform(*cfg.texture_reflectivity, size=n_tex)]))
    for _ in range(cfg.texture_patches):
        rad = rng.uniform(*cfg.texture_patch_radius_m)
        cx, cy = rng.uniform(-e + rad, e - rad, size=2)
        refl = rng.uniform(*cfg.texture_reflectivity)
        n = int(rng.poisson(math.pi * rad * rad / (2 * cfg.spacing_m) ** 2))
        rr = rad * np.sqrt(rng.uniform(0, 1, n))
        aa = rng.uniform(0, 2 * math.pi, n)
        pts = np.column_stack([cx + rr * np.cos(aa), cy + rr * np.sin(aa)])
        parts.append(np.column_stack([pts, refl * rng.uniform(0.5, 1.0, n)]))
    scat = np.concatenate(parts) if parts else np.zeros((0, 3))
    scat[:, 2] = np.clip(scat[:, 2], 1e-3, 1.0)
    return World(scat, (-e, -e, e, e))


@dataclass(frozen=True)
class RevisitOffset:
    """Body-frame offset applied to poses with index in [start, stop)."""

    start: int
    stop: int
    yaw_rad: float = 0.0
    lateral_m: float = 0.0
    forward_m: float = 0.0

    def as_se2(self) -> SE2:
        return SE2(self.forward_m, self.lateral_m, self.yaw_rad)


@dataclass(frozen=True)
class TrajectorySpec:
    poses: Tuple[SE2, ...]
    timestamps: Tuple[float, ...]
    sigma_trans_per_m: float = 0.0
    sigma_yaw_per_rad: float = 0.0
    revisits: Tuple[RevisitOffset, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if len(self.poses) != len(self.timestamps):
            raise ParameterError("poses and timestamps differ in length")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ParameterError("timestamps must be strictly increasing")
        if self.sigma_trans_per_m < 0 or self.sigma_yaw_per_rad < 0:
            raise ParameterError("odometry noise must be >= 0")

    def ground_truth(self) -> List[SE2]:
        out = list(self.poses)
        for rv in self.revisits:
            off = rv.as_se2()
            for k in range(max(rv.start, 0), min(rv.stop, len(out))):
                out[k] = self.poses[k] @ off
        return out

    def to_dict(self) -> dict:
        return {
            "poses": [[p.x, p.y, p.yaw] for p in self.poses],
            "timestamps": list(self.timestamps),
            "sigma_trans_per_m": self.sigma_trans_per_m,
            "sigma_yaw_per_rad": self.sigma_yaw_per_rad,
            "revisits": [asdict(r) for r in self.revisits],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectorySpec":
        return cls(tuple(SE2(*p) for p in d["poses"]), tuple(float(t) for t in d["timestamps"]),
                   float(d.get("sigma_trans_per_m", 0.0)), float(d.get("sigma_yaw_per_rad", 0.0)),
                   tuple(RevisitOffset(**r) for r in d.get("revisits", [])), int(d.get("seed", 0)))


def circular_route(radius_m: float = 40.0, frames_per_lap: int = 200, laps: int = 2,
                   revisit_yaw_deg: float = 0.0, revisit_lateral_m: float = 0.0,
                   revisit_forward_m: float = 0.0, arc_fraction: float = 1.0, dt_s: float = 1.0,
                   sigma_trans_per_m: float = 0.0, sigma_yaw_per_rad: float = 0.0,
                   seed: int = 0) -> TrajectorySpec:
    """Counter-clockwise laps around the origin, heading along the tangent.

    Laps after the first carry the scripted revisit offset. ``arc_fraction``
    < 1 truncates each lap to an open arc (no self-revisit).
    """
    if frames_per_lap < 2 or laps < 1 or radius_m <= 0:
        raise ParameterError("need radius > 0, frames_per_lap >= 2, laps >= 1")
    poses = []
    step = 2 * math.pi * arc_fraction / frames_per_lap
    for lap in range(laps):
        for k in range(frames_per_lap):
            a = -math.pi / 2 + k * step
            poses.append(SE2(radius_m * math.cos(a), radius_m * math.sin(a), a + math.pi / 2))
    revisits = ()
    if laps > 1 and (revisit_yaw_deg or revisit_lateral_m or revisit_forward_m):
        revisits = (RevisitOffset(frames_per_lap, frames_per_lap * laps, math.radians(revisit_yaw_deg),
                                  revisit_lateral_m, revisit_forward_m),)
    stamps = tuple(dt_s * i for i in range(len(poses)))
    return TrajectorySpec(tuple(poses), stamps, sigma_trans_per_m, sigma_yaw_per_rad, revisits, seed)


def frame_rng(seed: int, index: int, stream: int = _RENDER_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream, int(index)])))


def render_sonar(world: World, pose: SE2, sensor: SensorModel, noise: NoiseConfig = NoiseConfig(),
                 rng: Optional[np.random.Generator] = None) -> PolarImage:
    """Polar intensity image seen from ``pose``, quantized to 8 bits."""
    img = np.zeros(sensor.shape)
    scat = world.scatterers
    if len(scat):
        local = pose.inverse().apply(scat[:, :2])
        u, v, ok = polar_of_array(local, sensor)
        r = np.hypot(local[:, 0], local[:, 1])
        ok &= r > 0
        u, v = u[ok], v[ok]
        inten = np.minimum(1.0, scat[ok, 2] * noise.r_ref_m / r[ok])
        rad = int(math.ceil(2 * noise.blob_sigma_px))
        for du in range(-rad, rad + 1):
            for dv in range(-rad, rad + 1):
                if noise.blob_sigma_px > 0:
                    wgt = math.exp(-(du * du + dv * dv) / (2 * noise.blob_sigma_px ** 2))
                else:
                    wgt = 1.0 if du == dv == 0 else 0.0
                if wgt < 1e-3:
                    continue
                uu, vv = u + du, v + dv
                inside = (uu >= 0) & (uu < sensor.width_px) & (vv >= 0) & (vv < sensor.height_px)
                np.maximum.at(img, (vv[inside], uu[inside]), inten[inside] * wgt)
    if noise.speckle_weight > 0 or noise.noise_floor > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        speckle = rng.exponential(1.0, size=img.shape)
        floor = rng.exponential(1.0, size=img.shape)
        img = img * ((1.0 - noise.speckle_weight) + noise.speckle_weight * speckle)
        img = img + noise.noise_floor * floor
    img = np.clip(img, 0.0, 1.0)
    return PolarImage(sensor, np.round(img * 255.0) / 255.0)


def integrate_odometry(gt: Sequence[SE2], sigma_trans_per_m: float, sigma_yaw_per_rad: float,
                       seed: int) -> List[SE2]:
    """Dead-reckoned poses from ground-truth increments with proportional Gaussian noise."""
    if not gt:
        return []
    if sigma_trans_per_m == 0 and sigma_yaw_per_rad == 0:
        # re-composing increments would drift by a few ulp; noiseless means exact
        return list(gt)
    rng = frame_rng(seed, 0, _ODOM_STREAM)
    out = [gt[0]]
    for a, b in zip(gt, gt[1:]):
        rel = a.between(b)
        dist = rel.translation_norm()
        st = sigma_trans_per_m * dist
        sy = sigma_yaw_per_rad * abs(rel.yaw)
        n = rng.standard_normal(3)
        noisy = SE2(rel.x + st * n[0], rel.y + st * n[1], rel.yaw + sy * n[2])
        out.append(out[-1] @ noisy)
    return out


@dataclass
class SimulatedSequence:
    sensor: SensorModel
    ground_truth: List[SE2]
    odometry: List[SE2]
    timestamps: List[float]
    images: List[PolarImage]


def simulate(world: World, traj: TrajectorySpec, sensor: SensorModel, noise: NoiseConfig = NoiseConfig()
             ) -> SimulatedSequence:
    gt = traj.ground_truth()
    odom = integrate_odometry(gt, traj.sigma_trans_per_m, traj.sigma_yaw_per_rad, traj.seed)
    images = [render_sonar(world, p, sensor, noise, frame_rng(traj.seed, k)) for k, p in enumerate(gt)]
    return SimulatedSequence(sensor, gt, odom, list(traj.timestamps), images)


def generate_dataset(world: World, traj: TrajectorySpec, sensor: SensorModel, noise: NoiseConfig,
                     out_dir) -> dict:
    """Render every frame and write the dataset directory; returns a summary."""
    out = ensure_dir(out_dir)
    ensure_dir(out / "images")
    seq = simulate(world, traj, sensor, noise)
    gt_rows, odom_rows = [], []
    for k, (img, g, o, t) in enumerate(zip(seq.images, seq.ground_truth, seq.odometry, seq.timestamps)):
        name = f"images/frame_{k:06d}.pgm"
        try:
            save_image(img, out / name)
        except OSError as e:
            raise OSError(f"failed writing {out / name}: {e}") from e
        gt_rows.append(PoseRecord(k, t, g, name))
        odom_rows.append(PoseRecord(k, t, o, name))
    write_sensor(sensor, out / "sensor.json")
    write_poses(gt_rows, out / "poses.csv")
    write_poses(odom_rows, out / "odometry.csv")
    with open(out / "scenario.json", "w") as f:
        json.dump({"world": world.to_dict(), "trajectory": traj.to_dict(),
                   "noise": asdict(noise)}, f, sort_keys=True)
        f.write("\n")
    return {"frames": len(gt_rows), "path": str(out), "scatterers": int(len(world.scatterers))}


def load_scenario(path) -> Tuple[World, TrajectorySpec, Optional[NoiseConfig]]:
    with open(Path(path)) as f:
        d = json.load(f)
    noise = NoiseConfig(**d["noise"]) if "noise" in d else None
    return World.from_dict(d["world"]), TrajectorySpec.from_dict(d["trajectory"]), noise
