"""End-to-end acceptance checks. Each test records one PASS/FAIL line,
listed together in the terminal summary."""

import json
import math
import time

import numpy as np
import pytest

from tactilebench import cli, config, dataset, geometry as g, i2t_model, nn, recognition as R, shapeclass
from tactilebench.dataset import Standardizer
from tactilebench.tactile_sim import STAMP_ORDER, TactileSignal

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def run_cli(*args):
    return cli.main([str(a) for a in args])


# -- 1 ----------------------------------------------------------------------

def test_c1_gradients():
    t0 = time.perf_counter()
    errs = cli.gradcheck_all(0)
    dt = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-4 and dt < 30
    assert record(1, ok, f"gradcheck i2t {errs['i2t']:.2e}, classifier {errs['shape_classifier']:.2e}, "
                         f"{dt:.1f}s"), errs


# -- 2 ----------------------------------------------------------------------

def test_c2_geometry_oracle():
    objs = config.object_set(config.load_config(), "tools")
    rng = np.random.default_rng(2)
    trials, within, worst_sdf = 0, 0, 0.0
    for i, obj in enumerate(objs):
        cloud, _ = g.sample_surface_points(obj, np.random.default_rng(100 + i), 100_000)
        for p in rng.uniform(-0.07, 0.07, (34, 3))[: 34 if i < 2 else 32]:
            _, d = g.nearest_surface_point(obj, p)
            oracle = np.linalg.norm(cloud - p, axis=1).min()
            trials += 1
            within += d <= oracle + 2e-3
        # rays from a shell aimed at surface samples
        targets, _ = g.sample_surface_points(obj, rng, 200)
        dirs = rng.standard_normal((200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = targets + 0.2 * dirs
        t = g.trace(obj, origins, -dirs, 0.5)
        hit = ~np.isnan(t)
        pts = origins[hit] - t[hit, None] * dirs[hit]
        worst_sdf = max(worst_sdf, float(np.abs(g.sdf(obj, pts)).max()))
    ok = trials == 100 and within == 100 and worst_sdf < 1e-5
    assert record(2, ok, f"nearest point {within}/{trials} within oracle + 2 mm, "
                         f"max |sdf| at ray hits {worst_sdf:.1e}")


# -- 3 ----------------------------------------------------------------------

def test_c3_ensemble_math():
    checks = []
    tau = TactileSignal(np.linspace(-1, 1, 15), "standardized")
    shift = np.zeros(15)
    shift[3] = math.log(2)
    far = np.zeros(15)
    far[:2] = (3.0, 4.0)
    lik = R.per_touch_likelihoods(tau, [tau, TactileSignal(tau.values + shift, "standardized"),
                                        TactileSignal(tau.values + far, "standardized")])
    checks.append(lik[0] == 1.0)
    checks.append(abs(lik[1] - 0.5) < 1e-15)
    checks.append(abs(lik[2] - math.exp(-5)) < 1e-15)

    rng = np.random.default_rng(3)
    for _ in range(200):
        v = rng.uniform(1e-6, 1, rng.integers(1, 8))
        w = R.binarize_winner(v)
        checks.append(w.sum() == 1 and w[np.argmax(v)] == 1)

    winners = rng.integers(0, 4, 50)
    b = R.BeliefState(list("abcd"))
    for k in winners:
        R.update_belief(b, np.eye(4, dtype=int)[k])
    checks.append(np.array_equal(b.posterior(), np.bincount(winners, minlength=4) / 50))

    for _ in range(200):
        true, n = rng.integers(0, 5), rng.integers(1, 12)
        b = R.BeliefState(list("abcde"))
        for _ in range(n):
            v = rng.uniform(0.01, 0.9, 5)
            v[true] = v.max() + 0.05
            R.update_belief(b, R.binarize_winner(v))
        checks.append(b.posterior()[true] == 1.0)
    ok = all(checks)
    assert record(3, ok, f"{sum(checks)}/{len(checks)} ensemble checks exact")


# -- 4 and 5 share one trained model ----------------------------------------

@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("accept")
    t0 = time.perf_counter()
    assert run_cli("gen-data", "--objects", "train", "--n", 2000, "--seed", 7, "--out", d / "data") == 0
    assert run_cli("train", "--data", d / "data", "--seed", 7, "--out", d / "model.i2tf") == 0
    return d, time.perf_counter() - t0


def test_c4_learning_beats_baseline(trained):
    d, elapsed = trained
    ds = dataset.load(d / "data")
    model = i2t_model.load_model(d / "model.i2tf")
    Y = model.standardizer.apply_array(ds.signals)
    mse, _ = i2t_model.evaluate(model, ds.patches[ds.val_idx].astype(float), Y[ds.val_idx])
    base = i2t_model.baseline_mse(Y[ds.train_idx], Y[ds.val_idx])
    ok = mse <= 0.8 * base and elapsed < 600
    assert record(4, ok, f"held-out MSE {mse:.3f} vs mean predictor {base:.3f} "
                         f"(ratio {mse / base:.2f}), gen + train {elapsed:.0f}s")


def test_c5_recognition(trained, capsys):
    d, _ = trained
    finals = {}
    for set_name in ("tools", "primitives"):
        out = d / f"{set_name}.jsonl"
        assert run_cli("recognize", "--model", d / "model.i2tf", "--set", set_name, "--mode", "both",
                       "--episodes", 20, "--touches", 10, "--seed", 5, "--out", out) == 0
        summaries = [r for r in map(json.loads, out.read_text().splitlines()) if r["type"] == "summary"]
        finals[set_name] = {s["mode"]: s["final_accuracy"] for s in summaries}
    table = R.format_comparison(finals)
    with capsys.disabled():
        print("\n" + table)
    ok = finals["tools"]["i2t"] >= 0.70 and finals["primitives"]["i2t"] > 1 / 3 and "I2T" in table
    assert record(5, ok, "final-touch accuracy " + ", ".join(
        f"{s} I2T {v['i2t']:.2f} / prop {v['prop']:.2f}" for s, v in finals.items()))


# -- 6 ----------------------------------------------------------------------

def test_c6_shape_classification():
    data = shapeclass.generate_stamp_dataset(1280, np.random.default_rng(0))
    res = shapeclass.train_classifier(data, epochs=100, seed=0)
    control = shapeclass.train_classifier(data, epochs=0, seed=0)
    worst = min(res.per_class.values())
    ok = res.total >= 0.90 and worst >= 0.80 and abs(control.total - 0.2) <= 0.1
    assert record(6, ok, f"total {res.total:.3f}, worst class {worst:.3f}, "
                         f"zero-epoch control {control.total:.3f}")
    assert set(res.per_class) == {s.value for s in STAMP_ORDER}


# -- 7 ----------------------------------------------------------------------

def test_c7_cli_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert run_cli("gen-data", "--n", 120, "--seed", 11, "--out", d / "data", "--no-figures") == 0
        assert run_cli("train", "--data", d / "data", "--epochs", 2, "--seed", 11,
                       "--out", d / "m.i2tf", "--no-figures") == 0
        assert run_cli("recognize", "--model", d / "m.i2tf", "--set", "tools", "--mode", "both",
                       "--episodes", 1, "--touches", 3, "--seed", 11, "--out", d / "r.jsonl",
                       "--no-figures") == 0
        outputs.append({p.relative_to(d).as_posix(): p.read_bytes()
                        for p in sorted(d.rglob("*")) if p.is_file()})
    same = [k for k in outputs[0] if outputs[0][k] == outputs[1].get(k)]
    ok = outputs[0].keys() == outputs[1].keys() and len(same) == len(outputs[0])
    assert record(7, ok, f"{len(same)}/{len(outputs[0])} output files byte-identical across runs")


# -- 8 ----------------------------------------------------------------------

def test_c8_round_trips(tmp_path, small_ds):
    checks = {}
    ds = small_ds
    dataset.save(ds, tmp_path / "d")
    back = dataset.load(tmp_path / "d")
    checks["dataset arrays"] = all(
        np.array_equal(getattr(ds, f), getattr(back, f))
        for f in ("object_ids", "frames", "penetration", "patches", "signals", "contacts", "split"))
    dataset.save(back, tmp_path / "d2")
    checks["dataset bytes"] = all((tmp_path / "d" / n).read_bytes() == (tmp_path / "d2" / n).read_bytes()
                                  for n in ("samples.bin", "manifest.json"))
    raw = (tmp_path / "d" / "samples.bin").read_bytes()

    def load_err(blob):
        (tmp_path / "d2" / "samples.bin").write_bytes(blob)
        try:
            dataset.load(tmp_path / "d2")
        except dataset.DatasetFormatError as e:
            return type(e)
        return None

    checks["dataset magic"] = load_err(b"XXXX" + raw[4:]) is dataset.BadMagicError
    checks["dataset truncation"] = load_err(raw[:-7]) is dataset.TruncatedPayloadError

    m = i2t_model.init_model(Standardizer(np.linspace(-1, 1, 15), np.linspace(0.5, 2, 15)),
                             np.random.default_rng(8))
    i2t_model.save_model(m, tmp_path / "m.i2tf")
    mb = i2t_model.load_model(tmp_path / "m.i2tf")
    checks["model params"] = all(np.array_equal(q, p.astype(np.float32)) for p, q in zip(m.params(), mb.params()))
    i2t_model.save_model(mb, tmp_path / "m2.i2tf")
    mraw = (tmp_path / "m.i2tf").read_bytes()
    checks["model bytes"] = mraw == (tmp_path / "m2.i2tf").read_bytes()

    def model_err(blob):
        (tmp_path / "bad.i2tf").write_bytes(blob)
        try:
            i2t_model.load_model(tmp_path / "bad.i2tf")
        except nn.ModelFormatError as e:
            return str(e)
        return ""

    checks["model magic"] = "magic" in model_err(b"I2TX" + mraw[4:])
    checks["model truncation"] = "truncated" in model_err(mraw[:-5])
    failed = [k for k, v in checks.items() if not v]
    assert record(8, not failed, f"{len(checks) - len(failed)}/{len(checks)} round-trip and corruption checks"
                                 + (f", failed: {', '.join(failed)}" if failed else "")), failed
