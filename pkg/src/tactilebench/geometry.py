"""Objects as unions of rigidly placed primitives.

Points and vectors are plain ``(3,)`` float arrays in meters. Every
primitive has an exact signed distance function, so the union (pointwise
minimum) is exact outside the object and a conservative bound inside.

Primitive conventions (local frame):

* ``sphere(radius)`` centred on the origin
* ``box(hx, hy, hz)`` half-extents, centred
* ``cylinder(radius, half_height)`` axis along z, centred
* ``cone(radius, height)`` base disk at z=0, apex at z=height
* ``prism(edge, half_length)`` equilateral triangle section in xy
  (centroid at the origin, one vertex on +y), extruded along z
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K

SPHERE_TRACE_EPS = 1e-6
SPHERE_TRACE_STEPS = 256
NORMAL_STEP = 1e-6

KINDS = {
    "sphere": (K.KIND_SPHERE, 1),
    "box": (K.KIND_BOX, 3),
    "cylinder": (K.KIND_CYLINDER, 2),
    "cone": (K.KIND_CONE, 2),
    "prism": (K.KIND_PRISM, 2),
}


class GeometryError(ValueError):
    pass


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rotation matrix for ``angle`` radians about ``axis`` (Rodrigues)."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    x, y, z = a
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def euler_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Extrinsic x-then-y-then-z rotation, angles in radians."""
    return rotation_about((0, 0, 1), rz) @ rotation_about((0, 1, 0), ry) @ rotation_about((1, 0, 0), rx)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise GeometryError("non-finite transform")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise GeometryError("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(np.eye(3), t)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def matrix34(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return f"RigidTransform(t={self.translation.tolist()})"


@dataclass(frozen=True)
class Primitive:
    kind: str
    size: tuple
    local_pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"unknown primitive kind {self.kind!r}")
        n = KINDS[self.kind][1]
        size = tuple(float(s) for s in self.size)
        if len(size) != n:
            raise GeometryError(f"{self.kind} takes {n} size parameters, got {len(size)}")
        if any(not s > 0 for s in size):
            raise GeometryError(f"{self.kind} size parameters must be > 0")
        object.__setattr__(self, "size", size)

    def area(self) -> float:
        s = self.size
        if self.kind == "sphere":
            return 4 * math.pi * s[0] ** 2
        if self.kind == "box":
            hx, hy, hz = s
            return 8 * (hx * hy + hy * hz + hx * hz)
        if self.kind == "cylinder":
            r, hh = s
            return 2 * math.pi * r * (2 * hh) + 2 * math.pi * r * r
        if self.kind == "cone":
            r, h = s
            return math.pi * r * r + math.pi * r * math.hypot(r, h)
        a, hl = s
        return 2 * (math.sqrt(3) / 4 * a * a) + 3 * a * 2 * hl

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "size": list(self.size),
            "rotation": self.local_pose.rotation.tolist(),
            "translation": self.local_pose.translation.tolist(),
        }


def sphere(r, pose=None):
    return Primitive("sphere", (r,), pose or RigidTransform())


def box(hx, hy, hz, pose=None):
    return Primitive("box", (hx, hy, hz), pose or RigidTransform())


def cylinder(r, half_height, pose=None):
    return Primitive("cylinder", (r, half_height), pose or RigidTransform())


def cone(r, height, pose=None):
    return Primitive("cone", (r, height), pose or RigidTransform())


def prism(edge, half_length, pose=None):
    return Primitive("prism", (edge, half_length), pose or RigidTransform())


@dataclass(frozen=True, eq=False)
class ObjectModel:
    name: str
    parts: tuple
    base_pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise GeometryError(f"object {self.name!r} has no parts")
        object.__setattr__(self, "parts", parts)

    @cached_property
    def packed(self):
        kinds = np.array([KINDS[p.kind][0] for p in self.parts], dtype=np.int64)
        params = np.zeros((len(self.parts), 3))
        rots = np.zeros((len(self.parts), 3, 3))
        trans = np.zeros((len(self.parts), 3))
        for i, p in enumerate(self.parts):
            params[i, :len(p.size)] = p.size
            world = self.base_pose.compose(p.local_pose)
            rots[i] = world.rotation
            trans[i] = world.translation
        return kinds, params, rots, trans

    def part_world_poses(self):
        return [self.base_pose.compose(p.local_pose) for p in self.parts]

    @cached_property
    def area_weights(self) -> np.ndarray:
        a = np.array([p.area() for p in self.parts])
        return a / a.sum()

    @cached_property
    def _boundary_cloud(self) -> np.ndarray:
        # dense fixed-seed surface samples used for interior nearest-point queries
        pts, _ = sample_surface_points(self, np.random.default_rng(0), 50_000)
        return pts

    def describe(self) -> dict:
        return {
            "name": self.name,
            "parts": [p.describe() for p in self.parts],
            "base_translation": self.base_pose.translation.tolist(),
        }

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


def _as_points(p) -> tuple[np.ndarray, bool]:
    a = np.ascontiguousarray(p, dtype=float)
    single = a.ndim == 1
    return a.reshape(-1, 3), single


def sdf(obj: ObjectModel, p):
    """Signed distance (meters) of one point or an ``(n, 3)`` array."""
    pts, single = _as_points(p)
    d = K.sdf_points(pts, *obj.packed)
    return float(d[0]) if single else d


def part_sdf(obj: ObjectModel, p) -> np.ndarray:
    """Per-part signed distances, shape ``(n, parts)``."""
    pts, _ = _as_points(p)
    return K.part_sdf_points(pts, *obj.packed)


_STENCIL = np.vstack([np.eye(3), -np.eye(3)])


def sdf_gradient(obj: ObjectModel, p, step: float = NORMAL_STEP) -> np.ndarray:
    """Central-difference gradient of the union SDF at points ``p``."""
    pts, single = _as_points(p)
    probe = (pts[:, None, :] + step * _STENCIL[None]).reshape(-1, 3)
    d = K.sdf_points(probe, *obj.packed).reshape(-1, 6)
    g = (d[:, :3] - d[:, 3:]) / (2 * step)
    return g[0] if single else g


def _part_gradient(obj, pts, k, step):
    probe = (pts[:, None, :] + step * _STENCIL[None]).reshape(-1, 3)
    d = K.part_sdf_points(probe, *obj.packed)[:, k].reshape(-1, 6)
    return (d[:, :3] - d[:, 3:]) / (2 * step)


def surface_normal(obj: ObjectModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if abs(sdf(obj, q)) >= 1e-4:
        raise GeometryError("query point is not on the surface")
    g = sdf_gradient(obj, q)
    n = np.linalg.norm(g)
    if n < 1e-9:
        raise GeometryError("ambiguous normal")
    return g / n


def raycast(obj: ObjectModel, origin, direction, t_max: float) -> Optional[float]:
    """First hit distance along a unit ray, or ``None`` on a miss."""
    if not t_max > 0:
        raise GeometryError("t_max must be positive")
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise GeometryError("ray direction must be unit length")
    t = trace(obj, np.asarray(origin, dtype=float)[None], d[None], t_max)[0]
    return None if np.isnan(t) else float(t)


def trace(obj: ObjectModel, origins, dirs, t_max: float) -> np.ndarray:
    """Vectorised sphere tracing; NaN marks misses."""
    o = np.ascontiguousarray(origins, dtype=float).reshape(-1, 3)
    d = np.ascontiguousarray(dirs, dtype=float).reshape(-1, 3)
    if d.shape[0] == 1 and o.shape[0] > 1:
        d = np.ascontiguousarray(np.broadcast_to(d, o.shape))
    return K.trace_rays(o, d, float(t_max), SPHERE_TRACE_EPS, SPHERE_TRACE_STEPS, *obj.packed)


def trace_nearest(obj: ObjectModel, origins, dirs, t_max: float) -> float:
    """Minimum hit distance over a bundle of rays; NaN if all miss."""
    o = np.ascontiguousarray(origins, dtype=float).reshape(-1, 3)
    d = np.ascontiguousarray(np.broadcast_to(np.asarray(dirs, dtype=float).reshape(-1, 3), o.shape))
    return float(K.trace_nearest(o, d, float(t_max), SPHERE_TRACE_EPS, SPHERE_TRACE_STEPS, *obj.packed))


def nearest_surface_point(obj: ObjectModel, p) -> tuple[np.ndarray, float]:
    """Closest point on the union's boundary and its distance.

    Outside the object the closest part's projection is exact. Inside, each
    part projection that does not land inside another part is a candidate,
    and a dense boundary sample cloud covers the rest.
    """
    p = np.asarray(p, dtype=float)
    kinds = obj.packed[0]
    best_q, best_d = None, math.inf
    for k in range(len(kinds)):
        q = p[None].copy()
        for _ in range(4):
            dk = part_sdf(obj, q)[0, k]
            g = _part_gradient(obj, q, k, 1e-7)[0]
            gn = np.linalg.norm(g)
            if gn < 1e-9:
                break
            q = q - dk * (g / gn)[None]
        q = q[0]
        if not np.all(np.isfinite(q)) or abs(sdf(obj, q)) > 1e-9:
            continue
        d = float(np.linalg.norm(p - q))
        if d < best_d:
            best_q, best_d = q, d
    if sdf(obj, p) < 0 or best_q is None:
        cloud = obj._boundary_cloud
        dist = np.linalg.norm(cloud - p, axis=1)
        i = int(np.argmin(dist))
        if dist[i] < best_d:
            best_q, best_d = cloud[i].copy(), float(dist[i])
    return best_q, best_d


# -- surface sampling -------------------------------------------------------

def _sample_part_local(prim: Primitive, rng, n):
    s = prim.size
    u = rng.random((n, 3))
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    if prim.kind == "sphere":
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return s[0] * v, v
    if prim.kind == "box":
        h = np.array(s)
        face_area = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]])
        face_area = np.repeat(face_area, 2)
        face = rng.choice(6, size=n, p=face_area / face_area.sum())
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        pts = (2 * u - 1) * h
        pts[np.arange(n), axis] = sign * h[axis]
        nrm[:] = 0.0
        nrm[np.arange(n), axis] = sign
        return pts, nrm
    if prim.kind == "cylinder":
        r, hh = s
        areas = np.array([2 * math.pi * r * 2 * hh, math.pi * r * r, math.pi * r * r])
        which = rng.choice(3, size=n, p=areas / areas.sum())
        phi = 2 * math.pi * u[:, 0]
        rho = np.where(which == 0, r, r * np.sqrt(u[:, 1]))
        z = np.where(which == 0, (2 * u[:, 2] - 1) * hh, np.where(which == 1, hh, -hh))
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        side = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(n)])
        cap = np.zeros((n, 3))
        cap[:, 2] = np.where(which == 1, 1.0, -1.0)
        nrm = np.where((which == 0)[:, None], side, cap)
        return pts, nrm
    if prim.kind == "cone":
        r, h = s
        slant = math.hypot(r, h)
        areas = np.array([math.pi * r * slant, math.pi * r * r])
        which = rng.choice(2, size=n, p=areas / areas.sum())
        phi = 2 * math.pi * u[:, 0]
        frac = np.sqrt(u[:, 1])  # distance from apex, area-uniform on the flank
        rho = r * frac
        z = np.where(which == 0, h * (1 - frac), 0.0)
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        flank = np.column_stack([h * np.cos(phi), h * np.sin(phi), np.full(n, r)]) / slant
        base = np.tile([0.0, 0.0, -1.0], (n, 1))
        nrm = np.where((which == 0)[:, None], flank, base)
        return pts, nrm
    # prism
    a, hl = s
    hgt = math.sqrt(3) / 2 * a
    V = np.array([[-a / 2, -hgt / 3], [a / 2, -hgt / 3], [0.0, 2 * hgt / 3]])
    cap_area = math.sqrt(3) / 4 * a * a
    areas = np.array([cap_area, cap_area, a * 2 * hl, a * 2 * hl, a * 2 * hl])
    which = rng.choice(5, size=n, p=areas / areas.sum())
    # caps: uniform in triangle
    r1 = np.sqrt(u[:, 0])
    r2 = u[:, 1]
    tri = ((1 - r1)[:, None] * V[0] + (r1 * (1 - r2))[:, None] * V[1] + (r1 * r2)[:, None] * V[2])
    for i in range(n):
        w = which[i]
        if w < 2:
            z = hl if w == 0 else -hl
            pts[i] = (tri[i, 0], tri[i, 1], z)
            nrm[i] = (0.0, 0.0, 1.0 if w == 0 else -1.0)
        else:
            e = w - 2
            A, B = V[e], V[(e + 1) % 3]
            xy = A + u[i, 0] * (B - A)
            pts[i] = (xy[0], xy[1], (2 * u[i, 1] - 1) * hl)
            d = B - A
            out = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            nrm[i] = (out[0], out[1], 0.0)
    return pts, nrm


def sample_surface_points(obj: ObjectModel, rng, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Approximately area-uniform samples of the union's boundary.

    Parts are chosen by area, sampled analytically, and samples falling
    inside another part are rejected and redrawn.
    """
    poses = obj.part_world_poses()
    out_p, out_n = [], []
    need = n
    while need > 0:
        m = max(need, 16)
        part = rng.choice(len(obj.parts), size=m, p=obj.area_weights)
        pts = np.empty((m, 3))
        nrm = np.empty((m, 3))
        for k, prim in enumerate(obj.parts):
            idx = np.flatnonzero(part == k)
            if idx.size == 0:
                continue
            lp, ln = _sample_part_local(prim, rng, idx.size)
            pts[idx] = poses[k].apply(lp)
            nrm[idx] = poses[k].apply_vector(ln)
        if len(obj.parts) > 1:
            d = part_sdf(obj, pts)
            d[np.arange(m), part] = np.inf
            keep = d.min(axis=1) >= -1e-12
            pts, nrm = pts[keep], nrm[keep]
        out_p.append(pts[:need])
        out_n.append(nrm[:need])
        need -= len(out_p[-1])
    return np.concatenate(out_p), np.concatenate(out_n)


def sample_surface_point(obj: ObjectModel, rng) -> tuple[np.ndarray, np.ndarray]:
    pts, nrm = sample_surface_points(obj, rng, 1)
    return pts[0], nrm[0]


def make_object(name: str, parts: Sequence[Primitive], base_pose: Optional[RigidTransform] = None) -> ObjectModel:
    return ObjectModel(name, tuple(parts), base_pose or RigidTransform())
