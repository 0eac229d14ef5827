"""Rigid motion constrained to the ground plane.

A ground pose is a translation (tx, ty, tz) plus a yaw rotation about the
gravity axis +z. Poses compose like 4x4 homogeneous transforms but never
tilt out of the ground plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return float((angle + np.pi) % TWO_PI - np.pi)


@dataclass(frozen=True)
class GroundPose:
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        for name in ("tx", "ty", "tz", "yaw"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @staticmethod
    def identity() -> "GroundPose":
        return GroundPose()

    # ------------------------------------------------------------------

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        m = np.eye(4)
        m[0, 0], m[0, 1] = c, -s
        m[1, 0], m[1, 1] = s, c
        m[:3, 3] = (self.tx, self.ty, self.tz)
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray, atol: float = 1e-6) -> "GroundPose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 matrix")
        if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=atol):
            raise ValueError("not a rigid transform")
        r = m[:3, :3]
        tilt = max(abs(r[2, 0]), abs(r[2, 1]), abs(r[0, 2]), abs(r[1, 2]), abs(r[2, 2] - 1.0))
        if tilt > atol:
            raise ValueError("rotation is not about the gravity axis")
        if not np.allclose(r.T @ r, np.eye(3), atol=max(atol, 1e-9)):
            raise ValueError("rotation block is not orthonormal")
        yaw = float(np.arctan2(r[1, 0], r[0, 0]))
        return cls(float(m[0, 3]), float(m[1, 3]), float(m[2, 3]), yaw)

    # ------------------------------------------------------------------

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) points (also accepts a single (3,) point)."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        out = np.empty_like(pts)
        out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + self.tx
        out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + self.ty
        out[:, 2] = pts[:, 2] + self.tz
        return out[0] if single else out

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (no translation)."""
        vec = np.asarray(vectors, dtype=np.float64)
        single = vec.ndim == 1
        vec = np.atleast_2d(vec)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        out = np.empty_like(vec)
        out[:, 0] = c * vec[:, 0] - s * vec[:, 1]
        out[:, 1] = s * vec[:, 0] + c * vec[:, 1]
        out[:, 2] = vec[:, 2]
        return out[0] if single else out

    def inverse(self) -> "GroundPose":
        c, s = np.cos(-self.yaw), np.sin(-self.yaw)
        return GroundPose(
            -(c * self.tx - s * self.ty),
            -(s * self.tx + c * self.ty),
            -self.tz,
            -self.yaw,
        )

    def compose(self, other: "GroundPose") -> "GroundPose":
        """self applied after other: (self o other)(p) = self(other(p))."""
        t = self.apply(other.translation())
        return GroundPose(float(t[0]), float(t[1]), float(t[2]), self.yaw + other.yaw)
