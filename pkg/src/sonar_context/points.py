"""Point-cloud extraction from polar images and SONAR frame assembly."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import cv2
import numpy as np
from scipy import ndimage

from .descriptor import DEFAULT_PATCH, PolarKey, SonarContext, make_context, make_polar_key
from .errors import DegenerateHistogramError, ParameterError
from .polar_image import PolarImage, SensorModel, cartesian_of_array
from .se2 import SE2


@dataclass(frozen=True)
class PointConfig:
    median_kernel: int = 5
    band_lo: float = 0.25
    band_hi: float = 0.75
    max_points: int = 2048

    def __post_init__(self):
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise ParameterError(f"median_kernel must be odd and >= 1, got {self.median_kernel}")
        if not (0.0 <= self.band_lo < self.band_hi <= 1.0):
            raise ParameterError(f"need 0 <= band_lo < band_hi <= 1, got ({self.band_lo}, {self.band_hi})")
        if self.max_points < 1:
            raise ParameterError("max_points must be >= 1")


@dataclass(frozen=True, eq=False)
class PointCloud2D:
    points: np.ndarray = field(repr=False)
    intensities: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        inten = np.array(self.intensities, dtype=np.float64).reshape(-1)
        if len(pts) != len(inten):
            raise ParameterError("points and intensities differ in length")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("non-finite point coordinates")
        pts.setflags(write=False)
        inten.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensities", inten)

    @classmethod
    def empty(cls) -> "PointCloud2D":
        return cls(np.zeros((0, 2)), np.zeros(0))

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud2D):
            return NotImplemented
        return (np.array_equal(self.points, other.points)
                and np.array_equal(self.intensities, other.intensities))


@dataclass(frozen=True, eq=False)
class SonarFrame:
    frame_id: int
    timestamp_s: float
    polar_key: PolarKey
    context: SonarContext
    cloud: PointCloud2D
    odom_pose: SE2 = SE2()

    def __eq__(self, other):
        if not isinstance(other, SonarFrame):
            return NotImplemented
        return (self.frame_id == other.frame_id and self.timestamp_s == other.timestamp_s
                and self.polar_key == other.polar_key and self.context == other.context
                and self.cloud == other.cloud and self.odom_pose == other.odom_pose)


def median_filter(img: PolarImage, kernel: int = 5) -> PolarImage:
    """k x k median with edge replication at the borders."""
    h, w = img.pixels.shape
    if kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"median kernel must be odd and >= 1, got {kernel}")
    if kernel > min(h, w):
        raise ParameterError(f"median kernel {kernel} larger than image {w}x{h}")
    if kernel == 1:
        return img
    raw = np.round(img.pixels * 255.0)
    if np.array_equal(raw / 255.0, img.pixels):
        # 8-bit images: OpenCV's median replicates edges like mode="nearest"
        out = cv2.medianBlur(raw.astype(np.uint8), kernel).astype(np.float64) / 255.0
    else:
        out = ndimage.median_filter(img.pixels, size=kernel, mode="nearest")
    return PolarImage(img.sensor, out)


def intensity_histogram(img: PolarImage) -> np.ndarray:
    levels = np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.int64)
    return np.bincount(levels.ravel(), minlength=256)


def otsu_threshold(img: PolarImage) -> float:
    """Otsu threshold on the 256-level histogram.

    Level t splits the histogram into [0, t) and [t, 255]; the returned value
    is t / 255 and foreground is ``intensity >= threshold``. Among equally good
    levels the lowest wins.
    """
    hist = intensity_histogram(img).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError("image has fewer than two intensity levels")
    levels = np.arange(256, dtype=np.float64)
    total = hist.sum()
    # class 0 holds levels < t for t = 1..255
    n0 = np.cumsum(hist)[:-1]
    s0 = np.cumsum(hist * levels)[:-1]
    n1 = total - n0
    s1 = (hist * levels).sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = n0 * n1 * (s0 / n0 - s1 / n1) ** 2
    between = np.where((n0 > 0) & (n1 > 0), between, -np.inf)
    top = between.max()
    near = np.nonzero(between >= top * (1 - 1e-9))[0]
    if len(near) > 1:
        # settle float near-ties exactly: n0*n1*(mu0-mu1)^2 = (n1*s0 - n0*s1)^2 / (n0*n1)
        h = [int(c) for c in intensity_histogram(img)]
        ws = [k * c for k, c in enumerate(h)]
        tot, stot = sum(h), sum(ws)

        def exact(t):
            a, b = sum(h[:t]), sum(ws[:t])
            return Fraction((tot - a) * b - a * (stot - b), 1) ** 2 / (a * (tot - a))

        t = max((int(k) + 1 for k in near), key=lambda t: (exact(t), -t))
    else:
        t = int(near[0]) + 1
    return t / 255.0


def binarize(img: PolarImage, threshold: float) -> np.ndarray:
    # compare on the 8-bit grid so the threshold level itself is foreground
    return np.round(img.pixels * 255.0) >= round(threshold * 255.0)


def extract_points(img: PolarImage, sensor: Optional[SensorModel] = None, band_lo: float = 0.25,
                   band_hi: float = 0.75, max_points: int = 2048) -> PointCloud2D:
    """Otsu-foreground bin centers within the middle range band.

    An all-zero image yields an empty cloud; any other constant image raises
    :class:`DegenerateHistogramError`.
    """
    sensor = sensor or img.sensor
    if not (0.0 <= band_lo < band_hi <= 1.0):
        raise ParameterError(f"need 0 <= band_lo < band_hi <= 1, got ({band_lo}, {band_hi})")
    if not np.any(img.pixels > 0):
        return PointCloud2D.empty()
    fg = binarize(img, otsu_threshold(img))
    h = sensor.height_px
    v_lo, v_hi = band_lo * h, band_hi * h
    v, u = np.nonzero(fg)
    keep = (v >= v_lo) & (v < v_hi)
    v, u = v[keep], u[keep]
    inten = img.pixels[v, u]
    if len(v) > max_points:
        # highest intensity first; ties by lower v then lower u
        order = np.lexsort((u, v, -inten))[:max_points]
        order.sort()
        v, u, inten = v[order], u[order], inten[order]
    if len(v) == 0:
        return PointCloud2D.empty()
    return PointCloud2D(cartesian_of_array(u, v, sensor), inten)


def make_frame(img: PolarImage, sensor: Optional[SensorModel] = None, point_cfg: PointConfig = PointConfig(),
               frame_id: int = 0, timestamp_s: float = 0.0, odom_pose: SE2 = SE2(),
               patch=(DEFAULT_PATCH, DEFAULT_PATCH), executor: Optional[ThreadPoolExecutor] = None
               ) -> SonarFrame:
    """Run the descriptor and point pipelines on one image."""
    sensor = sensor or img.sensor

    def describe():
        ctx = make_context(img, *patch)
        return ctx, make_polar_key(ctx)

    def cloud():
        filtered = median_filter(img, point_cfg.median_kernel)
        try:
            return extract_points(filtered, sensor, point_cfg.band_lo, point_cfg.band_hi,
                                  point_cfg.max_points)
        except DegenerateHistogramError:
            return PointCloud2D.empty()

    if executor is not None:
        fut = executor.submit(cloud)
        ctx, key = describe()
        pc = fut.result()
    else:
        ctx, key = describe()
        pc = cloud()
    return SonarFrame(int(frame_id), float(timestamp_s), key, ctx, pc, odom_pose)
