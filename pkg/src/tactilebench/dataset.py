"""Simulated touch data: collection, standardisation, splits, persistence.

On disk a dataset is a directory with ``manifest.json`` and
``samples.bin``. Record layout (all little-endian)::

    "I2T1" | u32 version | u32 count
    per record: u32 object_id | 12 f32 frame (3x4 row-major [R|t])
                | f32 penetration (mm) | 2304 f32 patch | 15 f32 raw signal
                | 3 f32 contact point (m)
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .depth_render import (PATCH_SIZE, DepthPatch, SensorFrame, frame_facing, heightfield,
                           normalize_depth)
from .geometry import ObjectModel, RigidTransform, sample_surface_point
from .tactile_sim import (SIGNAL_DIM, SensorLayout, TactileSignal, indentation_from_heightfield,
                          simulate_tactile)

MAGIC = b"I2T1"
VERSION = 1
PENETRATION_RANGE = (0.5, 2.0)
RECORD_DTYPE = np.dtype([
    ("object_id", "<u4"),
    ("frame", "<f4", (12,)),
    ("penetration", "<f4"),
    ("patch", "<f4", (PATCH_SIZE * PATCH_SIZE,)),
    ("signal", "<f4", (SIGNAL_DIM,)),
    ("contact", "<f4", (3,)),
])


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class CountMismatchError(DatasetFormatError):
    pass


class DegenerateDimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TouchSample:
    object_id: int
    frame: SensorFrame
    penetration: float
    patch: DepthPatch
    signal_raw: TactileSignal
    contact_point: np.ndarray


def collect_sample(obj: ObjectModel, rng, object_id: int = 0,
                   layout: SensorLayout = SensorLayout(),
                   penetration_range=PENETRATION_RANGE) -> TouchSample:
    """One random touch: pick a surface point, face the pad onto it with a
    random roll, render the pre-contact patch, then press."""
    q, n = sample_surface_point(obj, rng)
    roll = rng.uniform(0.0, 2 * math.pi)
    frame = frame_facing(q, n, roll)
    pen = rng.uniform(*penetration_range)
    h = heightfield(obj, frame)
    patch = DepthPatch(normalize_depth(h, frame.standoff), frame)
    fld = indentation_from_heightfield(h, pen, frame.standoff)
    sig = simulate_tactile(fld, layout, noise_seed=int(rng.integers(2**63)))
    return TouchSample(object_id, frame, pen, patch, sig, q)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if np.any(self.std <= 1e-9):
            raise DegenerateDimensionError("degenerate dimension")

    def apply(self, sig: TactileSignal) -> TactileSignal:
        if sig.space != "raw":
            raise ValueError("signal is already standardized")
        return TactileSignal((sig.values - self.mean) / self.std, "standardized")

    def unapply(self, sig: TactileSignal) -> TactileSignal:
        if sig.space != "standardized":
            raise ValueError("signal is not standardized")
        return TactileSignal(sig.values * self.std + self.mean, "raw")

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.array(d["mean"]), np.array(d["std"]))


def fit_standardizer(signals) -> Standardizer:
    X = np.array([s.values if isinstance(s, TactileSignal) else s for s in signals], dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need at least two training signals")
    std = X.std(axis=0)
    if np.any(std <= 1e-9):
        raise DegenerateDimensionError("degenerate dimension")
    return Standardizer(X.mean(axis=0), std)


@dataclass
class Dataset:
    """Columnar float32 storage; exactly what goes to disk."""

    object_ids: np.ndarray
    frames: np.ndarray  # (n, 12)
    penetration: np.ndarray
    patches: np.ndarray  # (n, 2304)
    signals: np.ndarray  # (n, 15) raw
    contacts: np.ndarray  # (n, 3)
    objects: list = field(default_factory=list)  # object descriptions
    seed: Optional[int] = None
    layout: SensorLayout = field(default_factory=SensorLayout)
    split: Optional[np.ndarray] = None  # bool, True = train
    standardizer: Optional[Standardizer] = None

    def __len__(self):
        return len(self.object_ids)

    @classmethod
    def from_samples(cls, samples: Sequence[TouchSample], **meta) -> "Dataset":
        f32 = np.float32
        return cls(
            object_ids=np.array([s.object_id for s in samples], dtype=np.uint32),
            frames=np.array([s.frame.pose.matrix34().ravel() for s in samples], dtype=f32).reshape(-1, 12),
            penetration=np.array([s.penetration for s in samples], dtype=f32),
            patches=np.array([s.patch.values.ravel() for s in samples], dtype=f32).reshape(-1, PATCH_SIZE ** 2),
            signals=np.array([s.signal_raw.values for s in samples], dtype=f32).reshape(-1, SIGNAL_DIM),
            contacts=np.array([s.contact_point for s in samples], dtype=f32).reshape(-1, 3),
            **meta,
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.object_ids[idx], self.frames[idx], self.penetration[idx], self.patches[idx],
                       self.signals[idx], self.contacts[idx], self.objects, self.seed, self.layout,
                       None if self.split is None else self.split[idx], self.standardizer)

    @property
    def train_idx(self) -> np.ndarray:
        return np.flatnonzero(self.split)

    @property
    def val_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.split)

    def frame(self, i: int) -> SensorFrame:
        M = self.frames[i].astype(float).reshape(3, 4)
        u, _, vt = np.linalg.svd(M[:, :3])
        return SensorFrame(RigidTransform(u @ vt, M[:, 3]))


def _collect_range(args):
    objects, n, seed, layout, lo, hi = args
    streams = np.random.SeedSequence(seed).spawn(n)
    return [collect_sample(objects[i % len(objects)], np.random.default_rng(streams[i]),
                           i % len(objects), layout) for i in range(lo, hi)]


def generate_dataset(objects: Sequence[ObjectModel], n: int, seed: int,
                     layout: SensorLayout = SensorLayout(), train_fraction: float = 0.8,
                     workers: int = 1) -> Dataset:
    """Round-robin touches over ``objects``; each sample gets its own
    spawned RNG stream so (objects, seed, n) fix the result regardless of
    ``workers``."""
    if workers <= 1:
        samples = _collect_range((objects, n, seed, layout, 0, n))
    else:
        cuts = np.linspace(0, n, workers + 1).astype(int)
        jobs = [(list(objects), n, seed, layout, lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:])]
        with ProcessPoolExecutor(workers) as ex:
            samples = [s for part in ex.map(_collect_range, jobs) for s in part]
    ds = Dataset.from_samples(samples, objects=[o.describe() for o in objects], seed=seed, layout=layout)
    ds.split = split_mask(n, train_fraction, seed)
    ds.standardizer = fit_standardizer(ds.signals[ds.split])
    return ds


def split_mask(n: int, train_fraction: float, seed: int) -> np.ndarray:
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[order[:int(round(train_fraction * n))]] = True
    return mask


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    mask = split_mask(len(ds), train_fraction, seed)
    return ds.subset(np.flatnonzero(mask)), ds.subset(np.flatnonzero(~mask))


# -- persistence ------------------------------------------------------------

def _records(ds: Dataset) -> np.ndarray:
    rec = np.empty(len(ds), dtype=RECORD_DTYPE)
    rec["object_id"] = ds.object_ids
    rec["frame"] = ds.frames
    rec["penetration"] = ds.penetration
    rec["patch"] = ds.patches
    rec["signal"] = ds.signals
    rec["contact"] = ds.contacts
    return rec


def save(ds: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "samples.bin", "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(ds)))
        fh.write(_records(ds).tobytes())
    manifest = {
        "version": VERSION,
        "objects": ds.objects,
        "count": len(ds),
        "seed": ds.seed,
        "sensor_layout": ds.layout.to_dict(),
        "standardizer": None if ds.standardizer is None else ds.standardizer.to_dict(),
        "split": None if ds.split is None else ["train" if s else "val" for s in ds.split],
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def load(path) -> Dataset:
    path = Path(path)
    with open(path / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    raw = (path / "samples.bin").read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagicError("bad dataset magic")
    if len(raw) < 12:
        raise TruncatedPayloadError("truncated dataset header")
    version, count = struct.unpack("<II", raw[4:12])
    if version != VERSION or manifest.get("version") != VERSION:
        raise BadMagicError(f"unsupported dataset version {version}")
    body = raw[12:]
    if len(body) != count * RECORD_DTYPE.itemsize:
        raise TruncatedPayloadError(
            f"payload holds {len(body)} bytes, expected {count * RECORD_DTYPE.itemsize}")
    if manifest["count"] != count:
        raise CountMismatchError(f"manifest count {manifest['count']} != payload count {count}")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE)
    split = manifest.get("split")
    std = manifest.get("standardizer")
    return Dataset(
        object_ids=rec["object_id"].copy(),
        frames=rec["frame"].copy(),
        penetration=rec["penetration"].copy(),
        patches=rec["patch"].copy(),
        signals=rec["signal"].copy(),
        contacts=rec["contact"].copy(),
        objects=manifest["objects"],
        seed=manifest["seed"],
        layout=SensorLayout.from_dict(manifest["sensor_layout"]),
        split=None if split is None else np.array([s == "train" for s in split]),
        standardizer=None if std is None else Standardizer.from_dict(std),
    )
