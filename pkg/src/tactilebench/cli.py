"""Command-line entry point: ``tactilebench <subcommand> ...``.

Exit codes: 0 success, 2 invalid input (flags, config, files), 3 an
acceptance threshold was missed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, config, dataset, i2t_model, nn, plotting, recognition, shapeclass
from .tactile_sim import SensorLayout

EXIT_INVALID = 2
EXIT_ACCEPTANCE = 3
GRADCHECK_TOL = 1e-4
EVAL_RATIO = 0.8


class CLIError(Exception):
    pass


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _echo(name, resolved: dict):
    print(f"[{name}] " + " ".join(f"{k}={v}" for k, v in resolved.items()), flush=True)


def _layout(cfg) -> SensorLayout:
    return SensorLayout(kernel_sigma=config.get(cfg, "kernel_sigma", float),
                        noise_std=config.get(cfg, "noise_std", float))


def _pick(flag, cfg, key, cast):
    return cast(flag) if flag is not None else config.get(cfg, key, cast)


# -- gen-data ---------------------------------------------------------------

def cmd_gen_data(a, cfg):
    objs = config.object_set(cfg, a.objects)
    layout = _layout(cfg)
    frac = config.get(cfg, "train_fraction", float)
    workers = _pick(a.workers, cfg, "workers", int)
    _echo("gen-data", {"objects": a.objects, "n": a.n, "seed": a.seed, "out": a.out,
                       "train_fraction": frac, "workers": workers, **layout.to_dict()})
    t0 = time.perf_counter()
    ds = dataset.generate_dataset(objs, a.n, a.seed, layout, frac, workers)
    dataset.save(ds, a.out)
    _log(f"wrote {len(ds)} samples to {a.out} in {time.perf_counter() - t0:.1f}s")
    return 0


# -- train / eval -----------------------------------------------------------

def cmd_train(a, cfg):
    ds = dataset.load(a.data)
    hyper = {"epochs": _pick(a.epochs, cfg, "epochs", int), "batch": _pick(a.batch, cfg, "batch", int),
             "lr": _pick(a.lr, cfg, "lr", float), "aux_weight": _pick(a.aux_weight, cfg, "aux_weight", float)}
    _echo("train", {"data": a.data, "seed": a.seed, "out": a.out, **hyper})
    model, report = i2t_model.train(ds, seed=a.seed, log=_log, **hyper)
    i2t_model.save_model(model, a.out)
    out = Path(a.out)
    rep_path = out.with_name(out.name + ".report.json")
    rep_path.write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    if not a.no_figures and hyper["epochs"] > 0:
        plotting.training_curves(report, out.with_name(out.name + ".curves.png"))
    print(f"held-out touch MSE {report.final_val_touch_mse:.4f} "
          f"(mean predictor {report.baseline_val_mse:.4f}, best epoch {report.best_epoch})")
    return 0


def cmd_eval(a, cfg):
    ds = dataset.load(a.data)
    model = i2t_model.load_model(a.model)
    _echo("eval", {"data": a.data, "model": a.model})
    if ds.split is None:
        raise CLIError("dataset has no train/validation split")
    Y = model.standardizer.apply_array(ds.signals)
    tr, va = ds.train_idx, ds.val_idx
    if a.all:
        va = np.arange(len(ds))
    mse, rec = i2t_model.evaluate(model, ds.patches[va].astype(float), Y[va])
    base = i2t_model.baseline_mse(Y[tr], Y[va])
    ratio = mse / base
    print(f"touch MSE {mse:.4f}  mean-predictor MSE {base:.4f}  ratio {ratio:.3f}  recon MSE {rec:.4f}")
    ok = ratio <= EVAL_RATIO
    print(f"{'PASS' if ok else 'FAIL'} held-out MSE <= {EVAL_RATIO} x baseline")
    return 0 if ok else EXIT_ACCEPTANCE


# -- gradcheck --------------------------------------------------------------

def gradcheck_all(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    std = dataset.Standardizer(np.zeros(15), np.ones(15))
    model = i2t_model.init_model(std, rng)
    # a nonzero reconstruction target keeps the aux head active
    x = rng.uniform(0, 1, i2t_model.INPUT_DIM)
    y = rng.standard_normal(15)
    out = {"i2t": i2t_model.gradcheck_model(model, x, y, rng)}
    net = nn.init_net(shapeclass.CLASSIFIER_SIZES, shapeclass.CLASSIFIER_ACTS, rng)
    out["shape_classifier"] = nn.gradcheck(net, "cross_entropy", (rng.standard_normal(15), 2), rng)
    return out


def cmd_gradcheck(a, cfg):
    _echo("gradcheck", {"seed": a.seed, "tolerance": GRADCHECK_TOL})
    t0 = time.perf_counter()
    errs = gradcheck_all(a.seed)
    ok = True
    for name, e in errs.items():
        passed = e < GRADCHECK_TOL
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: max relative error {e:.3e}")
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
    return 0 if ok else EXIT_ACCEPTANCE


# -- recognize --------------------------------------------------------------

def _trial_chunk(args):
    cfg, set_name, model_path, mode, episodes, touches, seed, tcfg, targets = args
    objs = config.object_set(cfg, set_name)
    model = i2t_model.load_model(model_path)
    seqs = np.random.SeedSequence(seed).spawn(len(objs) * episodes)
    out = []
    for t, e in targets:
        rng = np.random.default_rng(seqs[t * episodes + e])
        out.append(recognition.run_episode(t, objs, model, touches, mode, rng, tcfg))
    return out


def episode_records(reports, objects, set_name, mode, episodes) -> list:
    names = [o.name for o in objects]
    lines = []
    for idx, r in enumerate(reports):
        ep = idx % episodes
        for t in r.touches:
            lines.append({"type": "touch", "set": set_name, "mode": mode, "episode": ep,
                          "true_object": names[r.true_object], "touch": t["touch"],
                          "hypothesis": names[t["hypothesis"]], "winner": names[t["winner"]],
                          "posterior": t["posterior"], "likelihoods": t["likelihoods"],
                          "correct": t["correct"], "frame": t["frame"]})
        lines.append({"type": "episode", "set": set_name, "mode": mode, "episode": ep,
                      "true_object": names[r.true_object], "final_posterior": r.final_posterior,
                      "correct": r.correct[-1] if r.touches else None})
    acc = recognition.accuracy_per_touch(reports)
    per_obj = {n: float(np.mean([r.correct[-1] for r in reports if r.true_object == i]))
               for i, n in enumerate(names)}
    lines.append({"type": "summary", "set": set_name, "mode": mode, "candidates": names,
                  "episodes_per_object": episodes, "touches": len(acc),
                  "accuracy_per_touch": [float(v) for v in acc], "final_accuracy": float(acc[-1]),
                  "final_accuracy_per_object": per_obj,
                  "location_heuristic": recognition.LOCATION_HEURISTIC,
                  "location_heuristic_note": recognition.LOCATION_HEURISTIC_NOTE})
    return lines


def run_recognition(cfg, set_name, model_path, mode, episodes, touches, seed, workers=1, log=None):
    objs = config.object_set(cfg, set_name)
    tcfg = recognition.TouchConfig(layout=_layout(cfg),
                                   contact_noise_std=config.get(cfg, "contact_noise_std", float),
                                   candidates_per_touch=config.get(cfg, "candidates_per_touch", int))
    targets = [(t, e) for t in range(len(objs)) for e in range(episodes)]
    if workers <= 1:
        model = i2t_model.load_model(model_path)
        reports = recognition.run_trials(objs, model, mode, episodes, touches, seed, tcfg, log)
    else:
        chunks = [targets[i::workers] for i in range(workers)]
        jobs = [(cfg, set_name, model_path, mode, episodes, touches, seed, tcfg, c) for c in chunks]
        with ProcessPoolExecutor(workers) as ex:
            done = [r for part in ex.map(_trial_chunk, jobs) for r in part]
        order = {te: i for i, te in enumerate(t for c in chunks for t in c)}
        reports = [done[order[te]] for te in targets]
    return objs, reports


def cmd_recognize(a, cfg):
    episodes = _pick(a.episodes, cfg, "episodes", int)
    touches = _pick(a.touches, cfg, "touches", int)
    workers = _pick(a.workers, cfg, "workers", int)
    modes = ["i2t", "prop"] if a.mode == "both" else [a.mode]
    _echo("recognize", {"model": a.model, "set": a.set, "mode": a.mode, "episodes": episodes,
                        "touches": touches, "seed": a.seed, "out": a.out, "workers": workers,
                        "contact_noise_std": cfg["contact_noise_std"],
                        "candidates_per_touch": cfg["candidates_per_touch"]})
    if not Path(a.model).is_file():
        raise FileNotFoundError(f"model file not found: {a.model}")
    lines, curves, finals = [], {}, {}
    for mode in modes:
        objs, reports = run_recognition(cfg, a.set, a.model, mode, episodes, touches, a.seed, workers, _log)
        lines += episode_records(reports, objs, a.set, mode, episodes)
        acc = recognition.accuracy_per_touch(reports)
        curves[f"{a.set} / {'I2T' if mode == 'i2t' else 'prop.'}"] = acc
        finals[mode] = float(acc[-1])
        print(f"{a.set} {mode}: final-touch accuracy {acc[-1]:.2f} "
              f"(per touch {' '.join(f'{v:.2f}' for v in acc)})")
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for rec in lines:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if len(finals) == 2:
        print(recognition.format_comparison({a.set: finals}))
    if not a.no_figures:
        plotting.recognition_curves(curves, len(objs), out.with_suffix(".png"))
    return 0


# -- shapeclass / cluster ---------------------------------------------------

def cmd_shapeclass(a, cfg):
    layout = _layout(cfg)
    _echo("shapeclass", {"n": a.n, "seed": a.seed, "epochs": a.epochs, **layout.to_dict()})
    data = shapeclass.generate_stamp_dataset(a.n, np.random.default_rng(a.seed), layout)
    res = shapeclass.train_classifier(data, epochs=a.epochs, seed=a.seed)
    print(shapeclass.format_table(res))
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"per_class": res.per_class, "total": res.total, "confusion": res.confusion.tolist()}
        (out / "shapeclass.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        if not a.no_figures:
            plotting.confusion(res.confusion, out / "confusion.png")
    ok = res.total >= 0.90 and min(res.per_class.values()) >= 0.80
    return 0 if ok or a.epochs == 0 else EXIT_ACCEPTANCE


def cmd_cluster(a, cfg):
    ds = dataset.load(a.data)
    out = Path(a.out) if a.out else Path(a.data) / "clusters"
    _echo("cluster", {"data": a.data, "k": a.k, "seed": a.seed, "out": str(out)})
    summaries, res = analysis.cluster_report(ds, a.k, a.seed)
    path = analysis.save_report(summaries, res, out)
    if not a.no_figures:
        plotting.cluster_means(summaries, out / "clusters.png")
    for i, s in enumerate(summaries):
        print(f"cluster {i}: n={s.size} mean depth {s.mean_patch.mean():.3f} "
              f"mean |z| {np.abs(s.mean_signal[2::3]).mean():.2f}")
    print(f"wrote {path}")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tactilebench", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value config file overlaid on the defaults")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--no-figures", action="store_true", help="skip matplotlib output")
        return sp

    sp = add("gen-data", cmd_gen_data, "simulate touches and write a dataset directory")
    sp.add_argument("--objects", default="train", help="object set name from the config")
    sp.add_argument("--n", type=int, default=1630)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)

    sp = add("train", cmd_train, "train the depth-to-touch predictor")
    sp.add_argument("--data", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--aux-weight", type=float)
    sp.add_argument("--out", required=True)

    add("gradcheck", cmd_gradcheck, "finite-difference check of both network architectures")

    sp = add("recognize", cmd_recognize, "run seeded recognition episodes")
    sp.add_argument("--model", required=True)
    sp.add_argument("--set", required=True)
    sp.add_argument("--mode", choices=["i2t", "prop", "both"], default="i2t")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--touches", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)

    sp = add("shapeclass", cmd_shapeclass, "stamp shape classification experiment")
    sp.add_argument("--n", type=int, default=1280)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--out")

    sp = add("cluster", cmd_cluster, "k-means report over depth patches")
    sp.add_argument("--data", required=True)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--out")

    sp = add("eval", cmd_eval, "held-out MSE against the mean predictor")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--all", action="store_true", help="score every record, not just validation")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a, extra = parser.parse_known_args(argv)
    if extra:
        print(f"error: unknown flag(s): {' '.join(extra)}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = config.load_config(a.config)
        return a.func(a, cfg)
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
    except config.ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
    except (dataset.DatasetFormatError, nn.ModelFormatError) as e:
        print(f"error: bad file format: {e}", file=sys.stderr)
    except (CLIError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
