"""Planar rigid transforms (x, y, heading)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.pi - (math.pi - a) % (2.0 * math.pi)
    return r + 2.0 * math.pi if r <= -math.pi else r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    r = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)
    return np.where(r <= -np.pi, r + 2.0 * np.pi, r)


@dataclass(frozen=True)
class SE2:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @classmethod
    def identity(cls) -> "SE2":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SE2":
        return cls(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]))

    @classmethod
    def from_array(cls, v) -> "SE2":
        return cls(v[0], v[1], v[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation()
        m[0, 2], m[1, 2] = self.x, self.y
        return m

    def __matmul__(self, other: "SE2") -> "SE2":
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return SE2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    def inverse(self) -> "SE2":
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return SE2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.yaw)

    def between(self, other: "SE2") -> "SE2":
        """Pose of ``other`` expressed in this pose's frame."""
        return self.inverse() @ other

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 2) array of points."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return pts @ self.rotation().T + np.array([self.x, self.y])

    def translation_norm(self) -> float:
        return math.hypot(self.x, self.y)

    def isclose(self, other: "SE2", atol: float = 1e-9) -> bool:
        return (abs(self.x - other.x) <= atol and abs(self.y - other.y) <= atol
                and abs(wrap_angle(self.yaw - other.yaw)) <= atol)
