"""Sonar geometry, polar intensity images and on-disk dataset layout.

Images are stored as 8-bit binary PGM (P5) files with row 0 at the nearest
range bin. A dataset directory holds ``sensor.json``, ``poses.csv`` (ground
truth) and optionally ``odometry.csv`` with the same columns.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import FormatError, OutOfViewError, ParameterError
from .se2 import SE2

POSE_HEADER = ["frame_id", "timestamp_s", "x_m", "y_m", "yaw_rad", "image_file"]

# Relative slack when deciding whether a point sits on the edge of the view.
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class SensorModel:
    fov_deg: float = 130.0
    max_range_m: float = 50.0
    min_range_m: float = 0.0
    width_px: int = 260
    height_px: int = 500

    def __post_init__(self):
        if not (0.0 < self.fov_deg <= 360.0):
            raise ParameterError(f"fov_deg must be in (0, 360], got {self.fov_deg}")
        if not (0.0 <= self.min_range_m < self.max_range_m):
            raise ParameterError(
                f"need 0 <= min_range_m < max_range_m, got {self.min_range_m}, {self.max_range_m}")
        if int(self.width_px) != self.width_px or self.width_px < 1:
            raise ParameterError(f"width_px must be a positive integer, got {self.width_px}")
        if int(self.height_px) != self.height_px or self.height_px < 1:
            raise ParameterError(f"height_px must be a positive integer, got {self.height_px}")
        object.__setattr__(self, "width_px", int(self.width_px))
        object.__setattr__(self, "height_px", int(self.height_px))

    @property
    def fov_rad(self) -> float:
        return math.radians(self.fov_deg)

    @property
    def alpha(self) -> float:
        """Azimuth scale, pixels per radian."""
        return self.width_px / self.fov_rad

    @property
    def beta(self) -> float:
        """Range scale, pixels per meter."""
        return self.height_px / (self.max_range_m - self.min_range_m)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height_px, self.width_px)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SensorModel":
        try:
            return cls(fov_deg=float(d["fov_deg"]), max_range_m=float(d["max_range_m"]),
                       min_range_m=float(d.get("min_range_m", 0.0)),
                       width_px=d["width_px"], height_px=d["height_px"])
        except KeyError as e:
            raise FormatError(f"sensor description missing key {e.args[0]!r}") from None


@dataclass(frozen=True)
class SonarPoint:
    x_s: float
    y_s: float
    intensity: float = 1.0

    @property
    def range(self) -> float:
        return math.hypot(self.x_s, self.y_s)

    @property
    def azimuth(self) -> float:
        return math.atan2(self.y_s, self.x_s)


@dataclass(frozen=True, eq=False)
class PolarImage:
    """H x W intensity grid; rows are range bins, columns azimuth bins."""

    sensor: SensorModel
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.shape != self.sensor.shape:
            raise FormatError(f"pixel grid {px.shape} does not match sensor {self.sensor.shape}")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise ParameterError("intensities must be finite and within [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def zeros(cls, sensor: SensorModel) -> "PolarImage":
        return cls(sensor, np.zeros(sensor.shape))

    def to_bytes(self) -> np.ndarray:
        return np.round(self.pixels * 255.0).astype(np.uint8)

    def __eq__(self, other):
        if not isinstance(other, PolarImage):
            return NotImplemented
        return self.sensor == other.sensor and np.array_equal(self.pixels, other.pixels)


def polar_of(point: SonarPoint, sensor: SensorModel) -> Tuple[int, int]:
    """Pixel (u, v) containing a sensor-frame point."""
    u, v, ok = polar_of_array(np.array([[point.x_s, point.y_s]]), sensor)
    if not ok[0]:
        raise OutOfViewError(
            f"point ({point.x_s}, {point.y_s}) outside field of view or range window")
    return int(u[0]), int(v[0])


def polar_of_array(xy: np.ndarray, sensor: SensorModel):
    """Vectorized ``polar_of``. Returns (u, v, in_view) arrays; u, v are clamped."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    theta = np.arctan2(xy[:, 1], xy[:, 0])
    r = np.hypot(xy[:, 0], xy[:, 1])
    half = sensor.fov_rad / 2.0
    span = sensor.max_range_m - sensor.min_range_m
    in_view = ((np.abs(theta) <= half * (1 + _EDGE_EPS))
               & (r >= sensor.min_range_m - _EDGE_EPS * span)
               & (r <= sensor.max_range_m + _EDGE_EPS * span))
    u = np.floor(sensor.alpha * (theta + half)).astype(np.int64)
    v = np.floor(sensor.beta * (r - sensor.min_range_m)).astype(np.int64)
    u = np.clip(u, 0, sensor.width_px - 1)
    v = np.clip(v, 0, sensor.height_px - 1)
    return u, v, in_view


def cartesian_of(u: int, v: int, sensor: SensorModel) -> SonarPoint:
    """Sensor-frame point at the center of pixel (u, v)."""
    if not (0 <= u < sensor.width_px and 0 <= v < sensor.height_px):
        raise IndexError(f"bin ({u}, {v}) outside {sensor.width_px}x{sensor.height_px} image")
    xy = cartesian_of_array(np.array([u]), np.array([v]), sensor)
    return SonarPoint(float(xy[0, 0]), float(xy[0, 1]))


def cartesian_of_array(u: np.ndarray, v: np.ndarray, sensor: SensorModel) -> np.ndarray:
    theta = (np.asarray(u, dtype=float) + 0.5) / sensor.alpha - sensor.fov_rad / 2.0
    r = (np.asarray(v, dtype=float) + 0.5) / sensor.beta + sensor.min_range_m
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


# ---------------------------------------------------------------------------
# PGM I/O

def _read_pgm_header(data: bytes):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer PGM header field") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    return w, h, pos


def read_pgm(path) -> np.ndarray:
    """Read a P5 PGM into an (H, W) uint8 array."""
    data = Path(path).read_bytes()
    w, h, offset = _read_pgm_header(data)
    raster = data[offset:]
    if len(raster) != w * h:
        raise FormatError(f"{path}: expected {w * h} raster bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(arr).tobytes())


def load_image(path, sensor: SensorModel) -> PolarImage:
    raw = read_pgm(path)
    if raw.shape != sensor.shape:
        raise FormatError(f"{path}: image is {raw.shape[1]}x{raw.shape[0]}, "
                          f"sensor expects {sensor.width_px}x{sensor.height_px}")
    return PolarImage(sensor, raw.astype(np.float64) / 255.0)


def save_image(img: PolarImage, path) -> None:
    write_pgm(path, img.to_bytes())


def quantize(img: PolarImage) -> PolarImage:
    """Round intensities to the 8-bit storage grid."""
    return PolarImage(img.sensor, img.to_bytes().astype(np.float64) / 255.0)


# ---------------------------------------------------------------------------
# dataset manifest

@dataclass(frozen=True)
class PoseRecord:
    frame_id: int
    timestamp_s: float
    pose: SE2
    image_file: str


def write_sensor(sensor: SensorModel, path) -> None:
    with open(path, "w") as f:
        json.dump(sensor.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def read_sensor(path) -> SensorModel:
    try:
        with open(path) as f:
            return SensorModel.from_dict(json.load(f))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None


def write_poses(records: List[PoseRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(POSE_HEADER)
        for r in records:
            w.writerow([r.frame_id, repr(float(r.timestamp_s)), repr(r.pose.x), repr(r.pose.y),
                        repr(r.pose.yaw), r.image_file])


def read_poses(path) -> List[PoseRecord]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != POSE_HEADER:
            raise FormatError(f"{path}: header must be {','.join(POSE_HEADER)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(POSE_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(POSE_HEADER)} fields")
            try:
                out.append(PoseRecord(int(row[0]), float(row[1]),
                                      SE2(float(row[2]), float(row[3]), float(row[4])), row[5]))
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    return out


@dataclass
class Dataset:
    root: Path
    sensor: SensorModel
    ground_truth: List[PoseRecord]
    odometry: Optional[List[PoseRecord]] = None

    def __len__(self):
        return len(self.ground_truth)

    def image(self, index: int) -> PolarImage:
        return load_image(self.root / self.ground_truth[index].image_file, self.sensor)


def load_dataset(root) -> Dataset:
    root = Path(root)
    for name in ("sensor.json", "poses.csv"):
        if not (root / name).is_file():
            raise FileNotFoundError(f"dataset {root} is missing {name}")
    sensor = read_sensor(root / "sensor.json")
    gt = read_poses(root / "poses.csv")
    odom = read_poses(root / "odometry.csv") if (root / "odometry.csv").is_file() else None
    if odom is not None and [r.frame_id for r in odom] != [r.frame_id for r in gt]:
        raise FormatError(f"{root}: odometry.csv frame ids differ from poses.csv")
    ids = [r.frame_id for r in gt]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{root}: duplicate frame ids in poses.csv")
    return Dataset(root, sensor, gt, odom)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
