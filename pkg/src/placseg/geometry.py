"""Rigid transforms and probe frustum geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_DET_TOL = 1e-6


@dataclass
class RigidTransform:
    """Proper rigid map p -> rotation @ p + translation (mm)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=_DET_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > _DET_TOL:
            raise ValueError("rotation must have det +1 (no reflections)")
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_axis_angle(axis, angle_deg: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        a = np.deg2rad(angle_deg)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + np.sin(a) * k + (1 - np.cos(a)) * (k @ k)
        return RigidTransform(rotation=rot, translation=np.asarray(translation, dtype=np.float64))

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        single = points.ndim == 1
        pts = np.atleast_2d(points)
        out = pts @ self.rotation.T + self.translation
        return out[0] if single else out

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self after other: (self.compose(other)).apply(p) == self.apply(other.apply(p))."""
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rotation=rot_inv, translation=-rot_inv @ self.translation)


@dataclass
class FrustumGeometry:
    """Cone sector insonified by a probe: virtual apex, opening angle, depth range.

    A point is inside when its radial distance from the apex is at most
    max_depth and the angle between (point - apex) and the beam axis is at
    most opening_angle / 2.
    """

    apex: np.ndarray
    opening_angle: float = 80.0  # degrees, full opening
    max_depth: float = 150.0  # mm, radial from apex
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=np.float64)
        self.axis = np.asarray(self.axis, dtype=np.float64)
        if self.apex.shape != (3,):
            raise ValueError("apex must be a 3-vector")
        if not 0 < self.opening_angle < 180:
            raise ValueError("opening_angle must be in (0, 180) degrees")
        if self.max_depth <= 0:
            raise ValueError("max_depth must be positive")
        n = np.linalg.norm(self.axis)
        if abs(n - 1.0) > 1e-9:
            if n == 0:
                raise ValueError("axis must be non-zero")
            self.axis = self.axis / n

    @property
    def half_angle_rad(self) -> float:
        return np.deg2rad(self.opening_angle) / 2.0

    def depth(self, points):
        """Radial distance from the apex, mm."""
        rel = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.apex
        return np.linalg.norm(rel, axis=-1)

    def angle_from_axis(self, points):
        """Angle (rad) between point direction and beam axis; 0 at the apex."""
        rel = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.apex
        r = np.linalg.norm(rel, axis=-1)
        cosang = np.ones_like(r)
        nz = r > 0
        cosang[nz] = (rel[nz] @ self.axis) / r[nz]
        return np.arccos(np.clip(cosang, -1.0, 1.0))

    def contains(self, points):
        r = self.depth(points)
        theta = self.angle_from_axis(points)
        return (r <= self.max_depth) & (theta <= self.half_angle_rad + 1e-12)

    def bounding_box(self):
        """Axis-aligned (lo, hi) box in mm enclosing the cone sector."""
        half = self.half_angle_rad
        lo = np.empty(3)
        hi = np.empty(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            for sign, out in ((1.0, hi), (-1.0, lo)):
                c = float(np.clip(sign * e @ self.axis, -1.0, 1.0))
                ang = np.arccos(c)
                reach = 1.0 if ang <= half else np.cos(ang - half)
                # negative reach: the whole cone points away along sign*e
                out[k] = sign * max(reach, 0.0) * self.max_depth
        return self.apex + lo, self.apex + hi

    def transformed(self, t: RigidTransform) -> "FrustumGeometry":
        return FrustumGeometry(
            apex=t.apply(self.apex),
            opening_angle=self.opening_angle,
            max_depth=self.max_depth,
            axis=t.rotation @ self.axis,
        )
