"""Synthetic magnetometer skin: indentation field -> 15 readings.

Each of the five sites sees a Gaussian-weighted sum of the local gel
indentation (normal channel) and a lateral dipole-like term (x/y
channels). The model is linear in the indentation field, so it is stored
as a ``(15, 48*48)`` weight matrix per layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .depth_render import PATCH_SIZE, DEFAULT_PAD_SIDE, DEFAULT_STANDOFF

DELTA_MAX_MM = 3.5
SIGNAL_DIM = 15
PAD_SIDE_MM = DEFAULT_PAD_SIDE * 1000.0
PIXEL_PITCH_MM = PAD_SIDE_MM / PATCH_SIZE
DEFAULT_SITES = ((0.0, 0.0), (5.0, 5.0), (-5.0, 5.0), (-5.0, -5.0), (5.0, -5.0))


@dataclass(frozen=True)
class SensorLayout:
    sites: tuple = DEFAULT_SITES
    kernel_sigma: float = 3.0
    gain_z: float = 1.0
    gain_t: float = 1.0
    noise_std: float = 0.01

    def __post_init__(self):
        sites = tuple((float(x), float(y)) for x, y in self.sites)
        if len(set(sites)) != len(sites):
            raise ValueError("sensor sites must be distinct")
        if not self.kernel_sigma > 0:
            raise ValueError("kernel_sigma must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        object.__setattr__(self, "sites", sites)

    @property
    def dim(self) -> int:
        return 3 * len(self.sites)

    def to_dict(self) -> dict:
        return {"sites": [list(s) for s in self.sites], "kernel_sigma": self.kernel_sigma,
                "gain_z": self.gain_z, "gain_t": self.gain_t, "noise_std": self.noise_std}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorLayout":
        return cls(tuple(tuple(s) for s in d["sites"]), d["kernel_sigma"], d["gain_z"],
                   d["gain_t"], d["noise_std"])


@dataclass(frozen=True, eq=False)
class IndentationField:
    delta: np.ndarray
    pixel_pitch: float = PIXEL_PITCH_MM

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("indentation field must be a square grid")
        if d.min(initial=0.0) < 0.0 or d.max(initial=0.0) > DELTA_MAX_MM:
            raise ValueError(f"indentation must lie in [0, {DELTA_MAX_MM}] mm")
        object.__setattr__(self, "delta", d)

    def scaled(self, c: float) -> "IndentationField":
        return IndentationField(self.delta * c, self.pixel_pitch)


@dataclass(frozen=True, eq=False)
class TactileSignal:
    values: np.ndarray
    space: str = "raw"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape != (SIGNAL_DIM,):
            raise ValueError(f"tactile signal must have {SIGNAL_DIM} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("tactile signal must be finite")
        if self.space not in ("raw", "standardized"):
            raise ValueError(f"unknown signal space {self.space!r}")
        object.__setattr__(self, "values", v)


def indentation_from_heightfield(h: np.ndarray, penetration: float,
                                 standoff: float = DEFAULT_STANDOFF) -> IndentationField:
    """Press the pad ``penetration`` mm past first contact.

    ``h`` holds raw depths in meters; pixels at ``standoff`` are misses.
    """
    if not 0 < penetration <= DELTA_MAX_MM:
        raise ValueError(f"penetration must be in (0, {DELTA_MAX_MM}] mm")
    h = np.asarray(h, dtype=float)
    hit = h < standoff
    if not hit.any():
        return IndentationField(np.zeros_like(h), PAD_SIDE_MM / h.shape[0])
    h_mm = h * 1000.0
    h_min = h_mm[hit].min()
    delta = np.clip(h_min + penetration - h_mm, 0.0, DELTA_MAX_MM)
    delta[~hit] = 0.0
    return IndentationField(delta, PAD_SIDE_MM / h.shape[0])


@lru_cache(maxsize=32)
def _response_matrix(layout: SensorLayout, n: int, pitch: float) -> np.ndarray:
    c = (np.arange(n) + 0.5) * pitch - n * pitch / 2
    yy, xx = np.meshgrid(c, c, indexing="ij")
    xx, yy = xx.ravel(), yy.ravel()
    s = layout.kernel_sigma
    W = np.empty((layout.dim, n * n))
    for j, (px, py) in enumerate(layout.sites):
        dx, dy = xx - px, yy - py
        k = np.exp(-(dx * dx + dy * dy) / (2 * s * s)) * pitch * pitch
        W[3 * j] = layout.gain_t * (dx / s) * k
        W[3 * j + 1] = layout.gain_t * (dy / s) * k
        W[3 * j + 2] = layout.gain_z * k
    W.setflags(write=False)
    return W


def response_matrix(layout: SensorLayout, n: int = PATCH_SIZE, pitch: float = PIXEL_PITCH_MM) -> np.ndarray:
    return _response_matrix(layout, n, float(pitch))


def simulate_tactile(fld: IndentationField, layout: SensorLayout = SensorLayout(),
                     noise_seed: Optional[int] = None) -> TactileSignal:
    W = response_matrix(layout, fld.delta.shape[0], fld.pixel_pitch)
    v = W @ fld.delta.ravel()
    if noise_seed is not None and layout.noise_std > 0:
        v = v + np.random.default_rng(noise_seed).normal(0.0, layout.noise_std, v.shape)
    return TactileSignal(v, "raw")


# -- stamps -----------------------------------------------------------------

class StampShape(Enum):
    T = "T"
    CIRCLE = "circle"
    ANGLE = "angle"
    TRIANGLE = "triangle"
    CROSS = "cross"


STAMP_ORDER = (StampShape.T, StampShape.CIRCLE, StampShape.ANGLE, StampShape.TRIANGLE, StampShape.CROSS)
STAMP_DEPTH_MM = 3.5


@dataclass(frozen=True)
class StampSpec:
    """Stamp cross-section proportions in mm; every stamp fits a 10 mm box."""

    width: float = 10.0
    bar: float = 2.0


def _rect(x0, x1, y0, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def stamp_polygons(shape: StampShape, spec: StampSpec = StampSpec()):
    """Convex pieces (vertex arrays, counter-clockwise) whose union is the stamp.

    Circles are returned as ``("circle", radius)``.
    """
    w, b = spec.width / 2, spec.bar
    if shape is StampShape.CIRCLE:
        return [("circle", w)]
    if shape is StampShape.T:
        return [_rect(-w, w, w - b, w), _rect(-b / 2, b / 2, -w, w - b)]
    if shape is StampShape.ANGLE:
        return [_rect(-w, -w + b, -w + b, w), _rect(-w, w, -w, -w + b)]
    if shape is StampShape.CROSS:
        return [_rect(-w, w, -b / 2, b / 2), _rect(-b / 2, b / 2, -w, w)]
    hgt = math.sqrt(3) / 2 * spec.width
    return [np.array([[-w, -hgt / 2], [w, -hgt / 2], [0.0, hgt / 2]])]


def _inside_convex(poly, x, y):
    inside = np.ones_like(x, dtype=bool)
    for i in range(len(poly)):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % len(poly)]
        inside &= (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0
    return inside


def stamp_mask(shape: StampShape, offset=(0.0, 0.0), rotation: float = 0.0,
               spec: StampSpec = StampSpec()) -> np.ndarray:
    """Boolean 48x48 mask of pad pixels under the placed stamp."""
    shape = StampShape(shape)
    c = (np.arange(PATCH_SIZE) + 0.5) * PIXEL_PITCH_MM - PAD_SIDE_MM / 2
    yy, xx = np.meshgrid(c, c, indexing="ij")
    # pixel centres expressed in the stamp frame
    cr, sr = math.cos(rotation), math.sin(rotation)
    dx, dy = xx - offset[0], yy - offset[1]
    lx = cr * dx + sr * dy
    ly = -sr * dx + cr * dy
    half = PAD_SIDE_MM / 2
    mask = np.zeros_like(xx, dtype=bool)
    for piece in stamp_polygons(shape, spec):
        if isinstance(piece, tuple):
            r = piece[1]
            if abs(offset[0]) + r > half or abs(offset[1]) + r > half:
                raise ValueError("stamp out of pad")
            mask |= dx * dx + dy * dy <= r * r  # rotation-free, exact symmetry
            continue
        world = piece @ np.array([[cr, sr], [-sr, cr]]) + np.asarray(offset, dtype=float)
        if np.abs(world).max() > half:
            raise ValueError("stamp out of pad")
        mask |= _inside_convex(piece, lx, ly)
    return mask


def stamp_heightfield(shape: StampShape, offset=(0.0, 0.0), rotation: float = 0.0,
                      spec: StampSpec = StampSpec(), standoff: float = DEFAULT_STANDOFF) -> np.ndarray:
    """Raw depth grid (meters) for a stamp pressed flat against the pad."""
    mask = stamp_mask(shape, offset, rotation, spec)
    return np.where(mask, STAMP_DEPTH_MM / 1000.0, standoff)
