"""Ensemble object recognition from a sequence of touches.

Every touch is a weak model: candidates are scored against the measured
signal, the best one gets a single vote, and the posterior is the vote
share. Touch locations are planned on a sampled hypothesis object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import PENETRATION_RANGE, Standardizer
from .depth_render import (PATCH_SIZE, SensorFrame, approach, frame_facing, heightfield,
                           render_depth_patch)
from .geometry import ObjectModel, nearest_surface_point, sample_surface_point
from .tactile_sim import SensorLayout, TactileSignal, indentation_from_heightfield, simulate_tactile

PROPRIOCEPTION_SCALE = 0.005
MODES = ("i2t", "prop")
LOCATION_HEURISTIC = "max-mean-predicted-separation"
LOCATION_HEURISTIC_NOTE = "substitute: the original selection heuristic is unpublished"


# -- predictors -------------------------------------------------------------

class SimulatedTouchPredictor:
    """Ground-truth stand-in for a trained model: presses each rendered
    patch at a fixed penetration through the tactile simulator."""

    def __init__(self, standardizer: Standardizer, layout: SensorLayout = SensorLayout(),
                 penetration: float = 1.25, standoff: float = 0.01):
        self.standardizer = standardizer
        self.layout = layout
        self.penetration = penetration
        self.standoff = standoff

    def predict_patches(self, patches: np.ndarray) -> np.ndarray:
        out = []
        for v in np.atleast_2d(patches):
            h = self.standoff * (1.0 - v.reshape(PATCH_SIZE, PATCH_SIZE))
            fld = indentation_from_heightfield(h, self.penetration, self.standoff)
            out.append(simulate_tactile(fld, self.layout).values)
        return self.standardizer.apply_array(np.array(out))


def _predict(model, flat: np.ndarray) -> np.ndarray:
    if hasattr(model, "predict_patches"):
        return model.predict_patches(flat)
    from .i2t_model import predict_array
    return predict_array(model, flat)


def predicted_signal(obj: ObjectModel, frame: SensorFrame, model) -> TactileSignal:
    """What the model expects ``obj`` to feel like through ``frame``."""
    patch = render_depth_patch(obj, frame)
    return TactileSignal(_predict(model, patch.values.reshape(1, -1))[0], "standardized")


# -- ensemble math ----------------------------------------------------------

def per_touch_likelihoods(tau: TactileSignal, predictions: Sequence[TactileSignal]) -> np.ndarray:
    """``exp(-||tau - pred||_2)`` per candidate, in standardized units."""
    if tau.space != "standardized" or any(p.space != "standardized" for p in predictions):
        raise ValueError("likelihoods need standardized signals")
    P = np.array([p.values for p in predictions])
    return np.exp(-np.linalg.norm(P - tau.values, axis=1))


def proprioception_likelihoods(contact, objects: Sequence[ObjectModel],
                               scale: float = PROPRIOCEPTION_SCALE) -> np.ndarray:
    """``exp(-d / scale)`` with ``d`` the distance from the measured contact
    to each candidate's nearest surface point."""
    d = np.array([nearest_surface_point(o, contact)[1] for o in objects])
    return np.exp(-d / scale)


def binarize_winner(likelihoods) -> np.ndarray:
    lik = np.asarray(likelihoods, dtype=float)
    if lik.size == 0:
        raise ValueError("no candidates")
    out = np.zeros(lik.size, dtype=int)
    out[int(np.argmax(lik))] = 1  # argmax returns the first maximum
    return out


@dataclass
class BeliefState:
    candidates: list
    win_counts: np.ndarray = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.win_counts is None:
            self.win_counts = np.zeros(len(self.candidates), dtype=int)

    @property
    def touches(self) -> int:
        return int(self.win_counts.sum())

    def posterior(self) -> np.ndarray:
        n = self.touches
        if n == 0:
            return np.full(len(self.candidates), 1.0 / len(self.candidates))
        return self.win_counts / n

    def leader(self) -> int:
        return int(np.argmax(self.win_counts))


def update_belief(belief: BeliefState, one_hot) -> BeliefState:
    v = np.asarray(one_hot, dtype=int)
    if v.shape != belief.win_counts.shape or v.sum() != 1 or v.min() < 0:
        raise ValueError("update must be a one-hot vector over the candidates")
    belief.win_counts = belief.win_counts + v
    return belief


def hypothesis_distribution(belief: BeliefState, alpha: float = 1.0) -> np.ndarray:
    k = len(belief.candidates)
    return (belief.win_counts + alpha) / (belief.touches + alpha * k)


def sample_hypothesis(belief: BeliefState, rng, alpha: float = 1.0) -> int:
    p = hypothesis_distribution(belief, alpha)
    return int(rng.choice(len(p), p=p))


# -- touch planning ---------------------------------------------------------

def _candidate_frames(obj: ObjectModel, rng, k: int) -> list:
    frames = []
    for _ in range(k):
        q, n = sample_surface_point(obj, rng)
        frames.append(frame_facing(q, n, rng.uniform(0.0, 2 * math.pi)))
    return frames


def _predictions_at(frame: SensorFrame, objects: Sequence[ObjectModel], model) -> np.ndarray:
    """Predicted standardized signal per candidate, each after sliding the
    pad along its approach axis onto that candidate."""
    patches = np.empty((len(objects), PATCH_SIZE * PATCH_SIZE))
    for j, o in enumerate(objects):
        f, _ = approach(o, frame)
        patches[j] = render_depth_patch(o, f).values.ravel()
    return _predict(model, patches)


def _separation(preds: np.ndarray, hyp: int) -> float:
    others = [j for j in range(len(preds)) if j != hyp]
    if not others:
        return 0.0
    return float(np.mean(np.linalg.norm(preds[others] - preds[hyp], axis=1)))


def plan_touch(hyp: int, objects: Sequence[ObjectModel], model, rng, k: int = 16):
    """Pick among ``k`` frames sampled on the hypothesis the one whose
    predicted signal best separates it from the other candidates.

    Returns ``(frame, predictions at that frame, separations)``.
    """
    frames = _candidate_frames(objects[hyp], rng, k)
    if len(objects) == 1:
        return frames[0], _predictions_at(frames[0], objects, model), [0.0] * k
    best, best_sep, best_preds, seps = 0, -math.inf, None, []
    for i, f in enumerate(frames):
        preds = _predictions_at(f, objects, model)
        sep = _separation(preds, hyp)
        seps.append(sep)
        if sep > best_sep:
            best, best_sep, best_preds = i, sep, preds
    return frames[best], best_preds, seps


def select_touch_location(hyp: int, objects: Sequence[ObjectModel], model, rng, k: int = 16) -> SensorFrame:
    return plan_touch(hyp, objects, model, rng, k)[0]


# -- episodes ---------------------------------------------------------------

@dataclass
class TouchConfig:
    layout: SensorLayout = field(default_factory=SensorLayout)
    penetration_range: tuple = PENETRATION_RANGE
    contact_noise_std: float = 0.003  # m, proprioceptive error of the measured contact
    candidates_per_touch: int = 16


def real_touch(obj: ObjectModel, frame: SensorFrame, rng, cfg: TouchConfig = TouchConfig()):
    """Approach ``obj`` along the frame axis and press. Returns the raw
    signal and the measured (noisy) contact location."""
    f, hit = approach(obj, frame)
    h = heightfield(obj, f)
    pen = rng.uniform(*cfg.penetration_range) if cfg.penetration_range[0] < cfg.penetration_range[1] \
        else cfg.penetration_range[0]
    sig = simulate_tactile(indentation_from_heightfield(h, pen, f.standoff), cfg.layout,
                           noise_seed=int(rng.integers(2**63)))
    if hit and (h < f.standoff).any():
        i = int(np.argmin(h))
        contact = f.pixel_origins()[i] + h.ravel()[i] * f.direction
    else:
        contact = f.pose.translation + f.standoff * f.direction
    if cfg.contact_noise_std > 0:
        contact = contact + rng.normal(0.0, cfg.contact_noise_std, 3)
    return sig, contact


@dataclass
class EpisodeReport:
    true_object: int
    mode: str
    candidates: list
    touches: list = field(default_factory=list)

    @property
    def correct(self) -> list:
        return [t["correct"] for t in self.touches]

    @property
    def final_posterior(self) -> list:
        return self.touches[-1]["posterior"] if self.touches else []


def run_episode(true_object: int, objects: Sequence[ObjectModel], model, n_touches: int = 10,
                mode: str = "i2t", rng=None, cfg: TouchConfig = TouchConfig()) -> EpisodeReport:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0 <= true_object < len(objects):
        raise ValueError("true object is not among the candidates")
    rng = rng if rng is not None else np.random.default_rng(0)
    belief = BeliefState([o.name for o in objects])
    report = EpisodeReport(true_object, mode, list(belief.candidates))
    std = model.standardizer
    for i in range(n_touches):
        hyp = sample_hypothesis(belief, rng)
        frame, preds, _ = plan_touch(hyp, objects, model, rng, cfg.candidates_per_touch)
        raw, contact = real_touch(objects[true_object], frame, rng, cfg)
        tau = std.apply(raw)
        if mode == "i2t":
            lik = per_touch_likelihoods(tau, [TactileSignal(p, "standardized") for p in preds])
        else:
            lik = proprioception_likelihoods(contact, objects)
        win = binarize_winner(lik)
        update_belief(belief, win)
        belief.history.append((frame, tau, preds))
        post = belief.posterior()
        report.touches.append({
            "touch": i + 1,
            "hypothesis": hyp,
            "frame": [round(float(v), 9) for v in frame.pose.matrix34().ravel()],
            "likelihoods": [float(v) for v in lik],
            "winner": int(np.argmax(win)),
            "posterior": [float(v) for v in post],
            "correct": bool(int(np.argmax(post)) == true_object),
        })
    return report


def run_trials(objects: Sequence[ObjectModel], model, mode: str, episodes: int, n_touches: int,
               seed: int, cfg: TouchConfig = TouchConfig(), log=None) -> list:
    """``episodes`` seeded episodes for every candidate as the true object."""
    seqs = np.random.SeedSequence(seed).spawn(len(objects) * episodes)
    reports = []
    for t in range(len(objects)):
        for e in range(episodes):
            rng = np.random.default_rng(seqs[t * episodes + e])
            reports.append(run_episode(t, objects, model, n_touches, mode, rng, cfg))
            if log:
                log(f"{mode} true={objects[t].name} episode {e + 1}/{episodes} "
                    f"final correct={reports[-1].correct[-1]}")
    return reports


def accuracy_per_touch(reports: Sequence[EpisodeReport]) -> np.ndarray:
    return np.mean([r.correct for r in reports], axis=0)


def format_comparison(results: dict) -> str:
    """Final-touch accuracy table, one column pair (prop., I2T) per object
    set plus their mean. ``results[set_name][mode] = accuracy``."""
    sets = list(results)
    cols = sets + ["Mean"]
    mean = {m: float(np.mean([results[s][m] for s in sets])) for m in ("prop", "i2t")}
    rows = dict(results, Mean=mean)
    head = "Object set  | " + " | ".join(f"{c:^15}" for c in cols)
    sub = "Touch model | " + " | ".join(f"{'prop.':>7} {'I2T':>7}" for _ in cols)
    vals = "            | " + " | ".join(
        f"{100 * rows[c]['prop']:>6.0f}% {100 * rows[c]['i2t']:>6.0f}%" for c in cols)
    return "\n".join([head, sub, vals])
