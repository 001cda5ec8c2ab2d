"""Plain-text ``key = value`` configuration and object-set definitions.

Objects are written as ``+``-joined primitives, each optionally placed
with ``@ (x, y, z)`` (meters) and ``rot (rx, ry, rz)`` (degrees, extrinsic
x-y-z)::

    object.hammer = box(0.03, 0.01, 0.01) @ (0, 0, 0.05) + cylinder(0.007, 0.05)
    set.tools = screwdriver, hammer, hook
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Optional

from .geometry import GeometryError, ObjectModel, Primitive, RigidTransform, euler_xyz, make_object

DEFAULT_CONFIG = """\
# training primitives (the two the predictor learns from)
object.box = box(0.02, 0.015, 0.025)
object.cylinder = cylinder(0.02, 0.025)
# held-out primitives, similar extents (about 5 cm)
object.sphere = sphere(0.025)
object.cone = cone(0.025, 0.05) @ (0, 0, -0.025)
object.prism = prism(0.05, 0.025)
# tool-like composites
object.screwdriver = cylinder(0.012, 0.03) @ (0, 0, -0.02) + cylinder(0.004, 0.02) @ (0, 0, 0.03) + cone(0.006, 0.012) @ (0, 0, 0.05)
object.hammer = box(0.035, 0.012, 0.012) @ (0, 0, 0.045) + cylinder(0.008, 0.05) @ (0, 0, -0.01)
object.hook = box(0.006, 0.006, 0.045) + box(0.025, 0.006, 0.006) @ (0.019, 0, 0.039)

set.train = box, cylinder
set.primitives = sphere, cone, prism
set.tools = screwdriver, hammer, hook
set.validation = hammer

# sensor and data
kernel_sigma = 3.0
noise_std = 0.01
train_fraction = 0.8
workers = 1

# predictor training
epochs = 30
batch = 64
lr = 0.001
aux_weight = 0.5

# recognition
touches = 10
episodes = 20
candidates_per_touch = 16
contact_noise_std = 0.003
"""


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        out[key] = value
    return out


def load_config(path: Optional[str] = None) -> dict:
    """Defaults overlaid with ``path`` (if given)."""
    cfg = parse_config(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg.update(parse_config(p.read_text(encoding="utf-8")))
    return cfg


def get(cfg: dict, key: str, cast=str):
    try:
        return cast(cfg[key])
    except KeyError:
        raise ConfigError(f"missing config key {key!r}") from None
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from e


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TUPLE = rf"\(\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\)"
_PART = re.compile(
    rf"^(\w+)\s*\(([^)]*)\)\s*(?:@\s*{_TUPLE})?\s*(?:rot\s*{_TUPLE})?$")


def parse_object(name: str, spec: str) -> ObjectModel:
    parts = []
    for chunk in spec.split("+"):
        m = _PART.match(chunk.strip())
        if not m:
            raise ConfigError(f"object {name}: cannot parse {chunk.strip()!r}")
        kind = m.group(1)
        try:
            size = tuple(float(v) for v in m.group(2).split(","))
        except ValueError:
            raise ConfigError(f"object {name}: bad size list {m.group(2)!r}") from None
        t = tuple(float(m.group(i)) for i in (3, 4, 5)) if m.group(3) else (0.0, 0.0, 0.0)
        r = tuple(math.radians(float(m.group(i))) for i in (6, 7, 8)) if m.group(6) else (0.0, 0.0, 0.0)
        try:
            parts.append(Primitive(kind, size, RigidTransform(euler_xyz(*r), t)))
        except GeometryError as e:
            raise ConfigError(f"object {name}: {e}") from None
    return make_object(name, parts)


def object_set(cfg: dict, set_name: str) -> list:
    key = f"set.{set_name}"
    if key not in cfg:
        known = sorted(k[4:] for k in cfg if k.startswith("set."))
        raise ConfigError(f"unknown object set {set_name!r} (known: {', '.join(known)})")
    names = [n.strip() for n in cfg[key].split(",") if n.strip()]
    if len(set(names)) != len(names):
        raise ConfigError(f"object set {set_name!r} repeats a name")
    objs = []
    for n in names:
        if f"object.{n}" not in cfg:
            raise ConfigError(f"object {n!r} is not defined")
        objs.append(parse_object(n, cfg[f"object.{n}"]))
    return objs
