"""Sensor-aligned orthographic depth patches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ObjectModel, RigidTransform, GeometryError, trace, trace_nearest, rotation_about

PATCH_SIZE = 48
DEFAULT_PAD_SIDE = 0.02
DEFAULT_STANDOFF = 0.01


@dataclass(frozen=True, eq=False)
class SensorFrame:
    """Pad pose: pad centre at the origin, +z is the touch direction."""

    pose: RigidTransform = field(default_factory=RigidTransform)
    pad_side: float = DEFAULT_PAD_SIDE
    standoff: float = DEFAULT_STANDOFF

    def __post_init__(self):
        if not self.pad_side > 0 or not self.standoff > 0:
            raise GeometryError("pad_side and standoff must be positive")

    @property
    def direction(self) -> np.ndarray:
        return self.pose.rotation[:, 2].copy()

    @property
    def pixel_pitch(self) -> float:
        return self.pad_side / PATCH_SIZE

    def pixel_origins(self) -> np.ndarray:
        """World positions of the pixel centres, ``(48*48, 3)`` row-major."""
        c = (np.arange(PATCH_SIZE) + 0.5) * self.pixel_pitch - self.pad_side / 2
        yy, xx = np.meshgrid(c, c, indexing="ij")
        local = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
        return self.pose.apply(local)

    def advanced(self, distance: float) -> "SensorFrame":
        """Same frame slid ``distance`` meters along its touch direction."""
        t = self.pose.translation + distance * self.direction
        return SensorFrame(RigidTransform(self.pose.rotation, t), self.pad_side, self.standoff)


@dataclass(frozen=True, eq=False)
class DepthPatch:
    values: np.ndarray
    frame: SensorFrame

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"depth patch must be {PATCH_SIZE}x{PATCH_SIZE}")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("depth patch values must lie in [0, 1]")
        object.__setattr__(self, "values", v)


def frame_facing(point, normal, roll: float = 0.0, gap: float = DEFAULT_STANDOFF / 2,
                 pad_side: float = DEFAULT_PAD_SIDE, standoff: float = DEFAULT_STANDOFF) -> SensorFrame:
    """Frame whose pad faces ``point`` from ``gap`` meters along ``normal``.

    The touch direction is ``-normal``; ``roll`` spins the pad about it.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    z = -n
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.column_stack([x, y, z]) @ rotation_about((0, 0, 1), roll)
    # re-orthonormalise against accumulated rounding
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    origin = np.asarray(point, dtype=float) + gap * n
    return SensorFrame(RigidTransform(R, origin), pad_side, standoff)


def heightfield(obj: ObjectModel, frame: SensorFrame) -> np.ndarray:
    """Raw depth (meters) along +z from each pixel centre; misses read ``standoff``."""
    t = trace(obj, frame.pixel_origins(), frame.direction[None], frame.standoff)
    t = np.where(np.isnan(t), frame.standoff, np.minimum(t, frame.standoff))
    return t.reshape(PATCH_SIZE, PATCH_SIZE)


def normalize_depth(h: np.ndarray, standoff: float) -> np.ndarray:
    return (standoff - h) / standoff


def render_depth_patch(obj: ObjectModel, frame: SensorFrame) -> DepthPatch:
    return DepthPatch(normalize_depth(heightfield(obj, frame), frame.standoff), frame)


def approach(obj: ObjectModel, frame: SensorFrame, reach: float = 0.15) -> tuple[SensorFrame, bool]:
    """Slide ``frame`` along its touch direction until the nearest surface
    under the pad sits ``standoff / 2`` ahead, mirroring the pre-contact pose
    used when collecting data. Returns the frame and whether anything was hit
    within ``reach`` (the frame is returned unchanged otherwise)."""
    t = trace_nearest(obj, frame.pixel_origins(), frame.direction, reach)
    if math.isnan(t):
        return frame, False
    shift = t - frame.standoff / 2
    if math.isclose(shift, 0.0, abs_tol=1e-12):
        return frame, True
    return frame.advanced(shift), True
