"""Depth patch -> standardized touch predictor with an auxiliary
input-reconstruction head sharing a 5-d bottleneck."""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .dataset import Dataset, Standardizer
from .depth_render import PATCH_SIZE, DepthPatch
from .tactile_sim import SIGNAL_DIM, TactileSignal

INPUT_DIM = PATCH_SIZE * PATCH_SIZE
BOTTLENECK = 5
ENCODER_SIZES = (INPUT_DIM, 200, BOTTLENECK)
TOUCH_SIZES = (BOTTLENECK, 500, SIGNAL_DIM)
RECON_SIZES = (BOTTLENECK, 2000, INPUT_DIM)
HEAD_ACTS = ("relu", "identity")
FILE_MAGIC = b"I2TF"
FILE_VERSION = 1


def expected_param_count() -> int:
    total = 0
    for sizes in (ENCODER_SIZES, TOUCH_SIZES, RECON_SIZES):
        total += sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    return total


@dataclass
class I2TModel:
    encoder: nn.DenseNet
    touch_head: nn.DenseNet
    recon_head: nn.DenseNet
    standardizer: Standardizer
    aux_weight: float = 0.5

    def __post_init__(self):
        for net, sizes in ((self.encoder, ENCODER_SIZES), (self.touch_head, TOUCH_SIZES),
                           (self.recon_head, RECON_SIZES)):
            got = (net.n_in,) + tuple(l.n_out for l in net.layers)
            if got != sizes:
                raise ValueError(f"layer sizes {got} != {sizes}")
        if self.aux_weight < 0:
            raise ValueError("aux_weight must be non-negative")

    def params(self) -> list:
        return self.encoder.params() + self.touch_head.params() + self.recon_head.params()

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "I2TModel":
        return I2TModel(self.encoder.copy(), self.touch_head.copy(), self.recon_head.copy(),
                        self.standardizer, self.aux_weight)


def init_model(standardizer: Standardizer, rng, aux_weight: float = 0.5) -> I2TModel:
    return I2TModel(nn.init_net(ENCODER_SIZES, HEAD_ACTS, rng),
                    nn.init_net(TOUCH_SIZES, HEAD_ACTS, rng),
                    nn.init_net(RECON_SIZES, HEAD_ACTS, rng),
                    standardizer, aux_weight)


def _flat(patch) -> np.ndarray:
    v = patch.values if isinstance(patch, DepthPatch) else np.asarray(patch, dtype=float)
    if v.shape == (PATCH_SIZE, PATCH_SIZE):
        return v.reshape(INPUT_DIM)
    return v


def predict_array(model: I2TModel, patches: np.ndarray) -> np.ndarray:
    """Batch prediction on flattened patches ``(n, 2304)`` -> ``(n, 15)``."""
    code, _ = nn.forward(model.encoder, patches)
    return nn.forward(model.touch_head, code)[0]


def predict_touch(model: I2TModel, patch: DepthPatch) -> TactileSignal:
    return TactileSignal(predict_array(model, _flat(patch)), "standardized")


def loss_and_grads(model: I2TModel, x: np.ndarray, target: np.ndarray):
    """Returns ``(total, touch_mse, recon_mse, grads)``; grads follow
    ``model.params()``. Each MSE is a per-element mean."""
    code, c_enc = nn.forward(model.encoder, x)
    touch, c_touch = nn.forward(model.touch_head, code)
    recon, c_recon = nn.forward(model.recon_head, code)
    lt = nn.mse(touch, target)
    lr = nn.mse(recon, x)
    g_touch, g_code_t = nn.backward(model.touch_head, c_touch, nn.mse_grad(touch, target))
    g_recon, g_code_r = nn.backward(model.recon_head, c_recon, model.aux_weight * nn.mse_grad(recon, x))
    g_enc, _ = nn.backward(model.encoder, c_enc, g_code_t + g_code_r)
    return lt + model.aux_weight * lr, lt, lr, g_enc + g_touch + g_recon


def total_loss(model: I2TModel, patch, target: TactileSignal) -> float:
    if target.space != "standardized":
        raise ValueError("unstandardized target")
    x = _flat(patch)
    code, _ = nn.forward(model.encoder, x)
    touch = nn.forward(model.touch_head, code)[0]
    recon = nn.forward(model.recon_head, code)[0]
    return nn.mse(touch, target.values) + model.aux_weight * nn.mse(recon, x)


def gradcheck_model(model: I2TModel, x, target, rng, n_checks: int = 200, step: float = 1e-5) -> float:
    _, _, _, grads = loss_and_grads(model, x, target)
    return nn.gradcheck_params(model.params(), lambda: loss_and_grads(model, x, target)[0],
                               grads, rng, n_checks, step)


@dataclass
class TrainReport:
    train_touch_mse: list = field(default_factory=list)
    train_recon_mse: list = field(default_factory=list)
    val_touch_mse: list = field(default_factory=list)
    val_recon_mse: list = field(default_factory=list)
    best_epoch: Optional[int] = None
    final_val_touch_mse: Optional[float] = None
    baseline_val_mse: Optional[float] = None
    seed: int = 0
    hyper: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate(model: I2TModel, patches: np.ndarray, targets: np.ndarray, chunk: int = 256):
    """Per-element touch and reconstruction MSE over a split."""
    t_err = r_err = 0.0
    for s in range(0, len(patches), chunk):
        x = patches[s:s + chunk]
        code = nn.forward(model.encoder, x)[0]
        t_err += float(((nn.forward(model.touch_head, code)[0] - targets[s:s + chunk]) ** 2).sum())
        r_err += float(((nn.forward(model.recon_head, code)[0] - x) ** 2).sum())
    n = max(len(patches), 1)
    return t_err / (n * SIGNAL_DIM), r_err / (n * INPUT_DIM)


def baseline_mse(train_targets: np.ndarray, val_targets: np.ndarray) -> float:
    """Held-out MSE of always predicting the training-mean signal."""
    return float(((val_targets - train_targets.mean(axis=0)) ** 2).mean())


def train(ds: Dataset, epochs: int = 60, batch: int = 32, lr: float = 1e-3, aux_weight: float = 0.5,
          seed: int = 0, log=None) -> tuple[I2TModel, TrainReport]:
    """Minibatch Adam on the total loss, keeping the epoch with the lowest
    validation touch MSE."""
    if ds.split is None or ds.standardizer is None:
        raise ValueError("dataset needs a split and a fitted standardizer")
    tr, va = ds.train_idx, ds.val_idx
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("empty split")
    X = ds.patches.astype(float)
    Y = ds.standardizer.apply_array(ds.signals)
    rng = np.random.default_rng(seed)
    model = init_model(ds.standardizer, rng, aux_weight)
    report = TrainReport(seed=seed, hyper={"epochs": epochs, "batch": batch, "lr": lr,
                                           "aux_weight": aux_weight})
    report.baseline_val_mse = baseline_mse(Y[tr], Y[va])
    params = model.params()
    opt = nn.OptimizerState.for_params(params, lr=lr)
    best = None
    for epoch in range(epochs):
        t0 = time.perf_counter()
        order = rng.permutation(tr)
        st = sr = 0.0
        for s in range(0, len(order), batch):
            idx = order[s:s + batch]
            _, lt, lrec, grads = loss_and_grads(model, X[idx], Y[idx])
            nn.opt_step(opt, params, grads)
            st += lt * len(idx)
            sr += lrec * len(idx)
        vt, vr = evaluate(model, X[va], Y[va])
        for series, v in ((report.train_touch_mse, st / len(tr)), (report.train_recon_mse, sr / len(tr)),
                          (report.val_touch_mse, vt), (report.val_recon_mse, vr)):
            if not np.isfinite(v):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            series.append(v)
        if best is None or vt < report.val_touch_mse[best]:
            best = epoch
            best_model = model.copy()
        if log:
            log(f"epoch {epoch + 1}/{epochs} train {st / len(tr):.4f} val {vt:.4f} "
                f"recon {vr:.4f} ({time.perf_counter() - t0:.1f}s)")
    if best is not None:
        model = best_model
        report.best_epoch = best
        report.final_val_touch_mse = report.val_touch_mse[best]
    else:
        report.final_val_touch_mse = evaluate(model, X[va], Y[va])[0]
    return model, report


# -- serialisation ----------------------------------------------------------

def save_model(model: I2TModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(FILE_MAGIC)
        fh.write(struct.pack("<If", FILE_VERSION, model.aux_weight))
        for net in (model.encoder, model.touch_head, model.recon_head):
            nn.write_net(fh, net)
        fh.write(model.standardizer.mean.astype("<f4").tobytes())
        fh.write(model.standardizer.std.astype("<f4").tobytes())


def load_model(path) -> I2TModel:
    with open(path, "rb") as fh:
        if fh.read(4) != FILE_MAGIC:
            raise nn.ModelFormatError("bad model magic")
        head = fh.read(8)
        if len(head) != 8:
            raise nn.ModelFormatError("truncated model file")
        version, aux = struct.unpack("<If", head)
        if version != FILE_VERSION:
            raise nn.ModelFormatError(f"unsupported model version {version}")
        nets = [nn.read_net(fh) for _ in range(3)]
        tail = fh.read(8 * SIGNAL_DIM)
        if len(tail) != 8 * SIGNAL_DIM:
            raise nn.ModelFormatError("truncated model file")
        if fh.read(1):
            raise nn.ModelFormatError("trailing bytes after model")
    stats = np.frombuffer(tail, "<f4").astype(float)
    return I2TModel(*nets, Standardizer(stats[:SIGNAL_DIM], stats[SIGNAL_DIM:]), float(aux))
