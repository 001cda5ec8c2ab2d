import json
import math

import numpy as np
import pytest

from tactilebench import cli, config, geometry as g


# -- config -----------------------------------------------------------------

def test_parse_config_comments_and_blank_lines():
    cfg = config.parse_config("# header\n\nepochs = 5  # inline\nset.x = a, b\n")
    assert cfg == {"epochs": "5", "set.x": "a, b"}


def test_malformed_config_line():
    with pytest.raises(config.ConfigError, match="line 2"):
        config.parse_config("a = 1\nbroken line\n")


def test_config_file_overlays_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("epochs = 3\nobject.blob = sphere(0.01)\nset.mine = blob\n", encoding="utf-8")
    cfg = config.load_config(str(p))
    assert config.get(cfg, "epochs", int) == 3
    assert config.get(cfg, "batch", int) == 64
    assert [o.name for o in config.object_set(cfg, "mine")] == ["blob"]
    with pytest.raises(FileNotFoundError):
        config.load_config(str(tmp_path / "absent.cfg"))


def test_object_grammar():
    obj = config.parse_object("t", "box(0.01, 0.02, 0.03) @ (0.1, 0, -0.2) rot (90, 0, 0) + sphere(1e-2)")
    assert [p.kind for p in obj.parts] == ["box", "sphere"]
    np.testing.assert_allclose(obj.parts[0].local_pose.translation, (0.1, 0, -0.2))
    np.testing.assert_allclose(obj.parts[0].local_pose.rotation, g.rotation_about((1, 0, 0), math.pi / 2), atol=1e-15)
    for bad in ("box(0.01, 0.02)", "blob(1)", "sphere(0.01) @ (1, 2)", "sphere(-1)"):
        with pytest.raises((config.ConfigError, g.GeometryError)):
            config.parse_object("bad", bad)


def test_default_sets():
    cfg = config.load_config()
    assert [o.name for o in config.object_set(cfg, "train")] == ["box", "cylinder"]
    assert len(config.object_set(cfg, "primitives")) == 3
    assert len(config.object_set(cfg, "tools")) == 3
    with pytest.raises(config.ConfigError, match="unknown object set"):
        config.object_set(cfg, "nope")


# -- cli --------------------------------------------------------------------

def test_gen_data_echoes_config_and_writes_manifest(tmp_path, capsys):
    out = tmp_path / "d"
    assert cli.main(["gen-data", "--objects", "train", "--n", "25", "--seed", "4", "--out", str(out)]) == 0
    echoed = capsys.readouterr().out
    assert "[gen-data]" in echoed and "seed=4" in echoed and "noise_std=0.01" in echoed
    assert json.loads((out / "manifest.json").read_text())["count"] == 25


def test_flag_overrides_config(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("workers = 1\ntrain_fraction = 0.6\n")
    cli.main(["--config", str(p), "gen-data", "--n", "10", "--out", str(tmp_path / "d"), "--workers", "2"])
    echoed = capsys.readouterr().out
    assert "workers=2" in echoed and "train_fraction=0.6" in echoed


def test_validation_errors_exit_2(tmp_path, capsys):
    assert cli.main(["gen-data", "--n", "5", "--out", str(tmp_path), "--bogus"]) == 2
    assert "unknown flag" in capsys.readouterr().err
    assert cli.main(["eval", "--data", str(tmp_path / "none"), "--model", "m"]) == 2
    assert "missing file" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign here\n")
    assert cli.main(["--config", str(bad), "gradcheck"]) == 2
    assert "config" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        cli.main(["recognize", "--set", "tools"])
    assert e.value.code == 2


def test_gradcheck_command_passes(capsys):
    assert cli.main(["gradcheck", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert cli.main(["gen-data", "--n", "40", "--seed", "1", "--out", str(root / "d")]) == 0
    assert cli.main(["train", "--data", str(root / "d"), "--epochs", "1", "--batch", "16",
                     "--seed", "1", "--out", str(root / "m.i2tf")]) == 0
    return root


def test_train_writes_report_and_figure(tiny_run):
    rep = json.loads((tiny_run / "m.i2tf.report.json").read_text())
    assert len(rep["val_touch_mse"]) == 1 and rep["seed"] == 1
    assert (tiny_run / "m.i2tf.curves.png").stat().st_size > 0


def test_eval_reports_against_baseline(tiny_run, capsys):
    code = cli.main(["eval", "--data", str(tiny_run / "d"), "--model", str(tiny_run / "m.i2tf")])
    out = capsys.readouterr().out
    assert "mean-predictor MSE" in out
    assert code in (0, 3)
    assert ("PASS" in out) == (code == 0)


def test_recognize_writes_ten_touches_per_episode(tiny_run):
    out = tiny_run / "rep.jsonl"
    assert cli.main(["recognize", "--model", str(tiny_run / "m.i2tf"), "--set", "tools", "--mode", "prop",
                     "--episodes", "1", "--touches", "10", "--seed", "2", "--out", str(out)]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    touches = [r for r in recs if r["type"] == "touch"]
    assert len(touches) == 3 * 10
    for obj in ("screwdriver", "hammer", "hook"):
        ep = [r for r in touches if r["true_object"] == obj]
        assert [r["touch"] for r in ep] == list(range(1, 11))
        assert all(abs(sum(r["posterior"]) - 1) < 1e-12 for r in ep)
    summary = recs[-1]
    assert summary["type"] == "summary" and len(summary["accuracy_per_touch"]) == 10
    assert summary["location_heuristic_note"].startswith("substitute")
    assert (tiny_run / "rep.png").exists()


def test_cluster_command(tiny_run):
    assert cli.main(["cluster", "--data", str(tiny_run / "d"), "--k", "3", "--no-figures"]) == 0
    doc = json.loads((tiny_run / "d" / "clusters" / "clusters.json").read_text())
    assert sum(c["size"] for c in doc["clusters"]) == 40


def test_shapeclass_zero_epochs_is_chance(tmp_path, capsys):
    assert cli.main(["shapeclass", "--n", "200", "--epochs", "0", "--out", str(tmp_path)]) == 0
    assert "Letter" in capsys.readouterr().out
    assert (tmp_path / "confusion.png").exists()
