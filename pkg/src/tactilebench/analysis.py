"""Clustering diagnostics over processed depth patches."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .depth_render import PATCH_SIZE


@dataclass
class KMeansResult:
    assignments: np.ndarray
    means: np.ndarray
    inertia: float
    history: list  # inertia after every iteration
    iterations: int
    converged: bool
    reseeds: int = 0  # empty clusters refilled along the way


def _sq_dists(X, means):
    return (X * X).sum(1)[:, None] - 2 * X @ means.T + (means * means).sum(1)[None]


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm from ``k`` distinct seeded starting points.

    A cluster that loses all its members is re-seeded with the point
    farthest from its current mean.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must be in [1, {len(X)}]")
    uniq, first = np.unique(X, axis=0, return_index=True)
    if len(uniq) < k:
        raise ValueError(f"only {len(uniq)} distinct points for k={k}")
    rng = np.random.default_rng(seed)
    means = X[np.sort(first)[rng.choice(len(first), k, replace=False)]].copy()

    assign = None
    history = []
    converged = False
    it = 0
    reseeds = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, means)
        new = np.argmin(d, axis=1)
        if assign is not None and np.array_equal(new, assign):
            converged = True
            it -= 1
            break
        assign = new
        for c in range(k):
            members = assign == c
            if members.any():
                means[c] = X[members].mean(axis=0)
        for c in range(k):
            if not (assign == c).any():
                resid = ((X - means[assign]) ** 2).sum(1)
                far = int(np.argmax(resid))
                reseeds += 1
                donor = assign[far]
                assign[far] = c
                means[c] = X[far]
                means[donor] = X[assign == donor].mean(axis=0)
        history.append(float(((X - means[assign]) ** 2).sum()))
    inertia = float(((X - means[assign]) ** 2).sum())
    return KMeansResult(assign, means, inertia, history, it, converged, reseeds)


@dataclass
class ClusterSummary:
    size: int
    mean_patch: np.ndarray  # 48x48
    mean_signal: np.ndarray  # 15 raw


def cluster_report(ds: Dataset, k: int = 5, seed: int = 0) -> tuple[list, KMeansResult]:
    if len(ds) == 0:
        raise ValueError("empty dataset")
    X = ds.patches.astype(float)
    res = kmeans(X, k, seed)
    out = []
    for c in range(k):
        m = res.assignments == c
        out.append(ClusterSummary(int(m.sum()), X[m].mean(axis=0).reshape(PATCH_SIZE, PATCH_SIZE),
                                  ds.signals[m].astype(float).mean(axis=0)))
    return out, res


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary graymap of values in [0, 1]."""
    img = np.clip(np.round(np.asarray(image) * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def save_report(summaries: list, res: KMeansResult, out_dir, pgm: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "k": len(summaries),
        "inertia": res.inertia,
        "iterations": res.iterations,
        "converged": res.converged,
        "reseeds": res.reseeds,
        "clusters": [{"size": s.size, "mean_signal": s.mean_signal.tolist(),
                      "mean_patch_mean": float(s.mean_patch.mean())} for s in summaries],
    }
    path = out / "clusters.json"
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    if pgm:
        for i, s in enumerate(summaries):
            write_pgm(out / f"cluster{i}_mean_patch.pgm", s.mean_patch)
    return path
