"""Stamp shape classification on simulated tactile readings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .tactile_sim import (STAMP_ORDER, STAMP_DEPTH_MM, SensorLayout, StampSpec,
                          indentation_from_heightfield, simulate_tactile, stamp_heightfield)

CLASSIFIER_SIZES = (15, 500, 10, 5)
CLASSIFIER_ACTS = ("relu", "identity", "identity")


@dataclass
class StampDataset:
    signals: np.ndarray  # (n, 15) raw
    labels: np.ndarray  # (n,) index into STAMP_ORDER
    offsets: np.ndarray  # (n, 2) mm
    rotations: np.ndarray  # (n,) rad


@dataclass
class ShapeClassResult:
    net: nn.DenseNet
    per_class: dict
    total: float
    confusion: np.ndarray
    losses: list = field(default_factory=list)


def generate_stamp_dataset(n: int = 1280, rng=None, layout: SensorLayout = SensorLayout(),
                           spec: StampSpec = StampSpec(), max_offset: float = 4.0) -> StampDataset:
    """``n / 5`` presses per stamp at random offsets and rotations.

    Placements that would push the stamp past the pad edge are redrawn.
    """
    if n % len(STAMP_ORDER):
        raise ValueError("n must be divisible by the number of stamp shapes")
    rng = rng if rng is not None else np.random.default_rng(0)
    labels = np.repeat(np.arange(len(STAMP_ORDER)), n // len(STAMP_ORDER))
    signals = np.empty((n, layout.dim))
    offsets = np.empty((n, 2))
    rotations = np.empty(n)
    for i, lab in enumerate(labels):
        shape = STAMP_ORDER[lab]
        while True:
            off = rng.uniform(-max_offset, max_offset, 2)
            rot = rng.uniform(0.0, 2 * math.pi)
            try:
                h = stamp_heightfield(shape, off, rot, spec)
            except ValueError:
                continue
            break
        fld = indentation_from_heightfield(h, STAMP_DEPTH_MM)
        signals[i] = simulate_tactile(fld, layout, noise_seed=int(rng.integers(2**63))).values
        offsets[i] = off
        rotations[i] = rot
    return StampDataset(signals, labels, offsets, rotations)


def split_indices(n: int, train_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(order[:k]), np.sort(order[k:])


def confusion_matrix(true, pred, k: int = 5) -> np.ndarray:
    cm = np.zeros((k, k), dtype=int)
    np.add.at(cm, (np.asarray(true), np.asarray(pred)), 1)
    return cm


def train_classifier(data: StampDataset, epochs: int = 300, batch: int = 32, lr: float = 1e-3,
                     seed: int = 0, train_fraction: float = 0.8) -> ShapeClassResult:
    """Train 15-500-10-5 with cross-entropy; report held-out accuracies."""
    rng = np.random.default_rng(seed)
    tr, te = split_indices(len(data.labels), train_fraction, rng)
    k = len(STAMP_ORDER)
    if np.any(np.bincount(data.labels[te], minlength=k) == 0):
        raise ValueError("empty class in test split")
    mean = data.signals[tr].mean(axis=0)
    std = data.signals[tr].std(axis=0)
    std = np.where(std > 1e-9, std, 1.0)
    X = (data.signals - mean) / std
    y = data.labels

    net = nn.init_net(CLASSIFIER_SIZES, CLASSIFIER_ACTS, rng)
    params = net.params()
    opt = nn.OptimizerState.for_params(params, lr=lr)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(tr)
        total = 0.0
        for s in range(0, len(order), batch):
            idx = order[s:s + batch]
            out, cache = nn.forward(net, X[idx])
            total += nn.cross_entropy(out, y[idx]) * len(idx)
            grads, _ = nn.backward(net, cache, nn.cross_entropy_grad(out, y[idx]))
            nn.opt_step(opt, params, grads)
        losses.append(total / len(order))

    pred = np.argmax(nn.forward(net, X[te])[0], axis=1)
    cm = confusion_matrix(y[te], pred, k)
    per_class = {s.value: float(cm[i, i] / cm[i].sum()) for i, s in enumerate(STAMP_ORDER)}
    return ShapeClassResult(net, per_class, float(np.trace(cm) / cm.sum()), cm, losses)


def format_table(result: ShapeClassResult) -> str:
    """Accuracy table laid out like the hardware results: one column per
    stamp, then the total."""
    names = ['Letter"T"', "Circle", "Angle", "Triangle", "Cross", "Total"]
    vals = [result.per_class[s.value] for s in STAMP_ORDER] + [result.total]
    head = "Shape | " + " | ".join(names)
    row = "Acc.  | " + " | ".join(f"{v:.2f}".center(len(n)) for n, v in zip(names, vals))
    return head + "\n" + row
