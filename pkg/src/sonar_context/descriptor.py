"""SONAR context (max-pooled patch grid) and polar key (row means)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError
from .polar_image import PolarImage, SensorModel

DEFAULT_PATCH = 4


@dataclass(frozen=True, eq=False)
class SonarContext:
    """Pooled descriptor stored as an (R, A) array: rows are range, columns azimuth."""

    values: np.ndarray = field(repr=False)
    patch_w: int = DEFAULT_PATCH
    patch_h: int = DEFAULT_PATCH
    sensor: Optional[SensorModel] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ParameterError(f"context must be a non-empty 2-D grid, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_cols(self) -> int:
        """A, the number of azimuth sectors."""
        return self.values.shape[1]

    @property
    def n_rows(self) -> int:
        """R, the number of range rings."""
        return self.values.shape[0]

    def with_values(self, values: np.ndarray) -> "SonarContext":
        return SonarContext(values, self.patch_w, self.patch_h, self.sensor)

    def __eq__(self, other):
        if not isinstance(other, SonarContext):
            return NotImplemented
        return (self.patch_w == other.patch_w and self.patch_h == other.patch_h
                and self.sensor == other.sensor and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class PolarKey:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, PolarKey):
            return NotImplemented
        return np.array_equal(self.values, other.values)


def make_context(img: PolarImage, p_w: int = DEFAULT_PATCH, p_h: int = DEFAULT_PATCH) -> SonarContext:
    """Max-pool ``img`` over non-overlapping p_w x p_h patches.

    Trailing columns/rows that do not fill a whole patch are dropped.
    """
    h, w = img.pixels.shape
    if p_w < 1 or p_h < 1 or p_w > w or p_h > h:
        raise ParameterError(f"patch {p_w}x{p_h} invalid for {w}x{h} image")
    n_cols, n_rows = w // p_w, h // p_h
    px = img.pixels[: n_rows * p_h, : n_cols * p_w]
    pooled = px.reshape(n_rows, p_h, n_cols, p_w).max(axis=(1, 3))
    return SonarContext(pooled, p_w, p_h, img.sensor)


def make_polar_key(ctx: SonarContext) -> PolarKey:
    return PolarKey(ctx.values.mean(axis=1))
