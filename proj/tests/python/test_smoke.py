"""End-to-end smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import dualflow


def tiny_config(objective="dfm", **extra):
    cfg = dualflow.default_config()
    cfg["objective"] = objective
    cfg["data"].update(kind="telemetry", timesteps=1200, channels=2, window=4)
    cfg["model"].update(hidden=[16], time_embed=4)
    cfg["optimizer"].update(batch=32, steps=40)
    cfg["eval_solver"].update(method="euler", steps=4)
    for key, value in extra.items():
        cfg[key].update(value) if isinstance(value, dict) else cfg.update({key: value})
    return cfg


def test_two_moons_shapes_and_determinism():
    a = dualflow.gen_two_moons(256, 0.08, seed=3)
    b = dualflow.gen_two_moons(256, 0.08, seed=3)
    assert a.shape == (256, 2)
    np.testing.assert_array_equal(a, b)


def test_telemetry_and_windows():
    values, labels = dualflow.gen_telemetry(600, 3, anomaly_rate=0.05, seed=1)
    assert values.shape == (600, 3)
    assert len(labels) == 600
    assert sum(labels) == 30
    windows, wlabels = dualflow.make_windows(values, window=8, labels=labels)
    assert windows.shape == (600, 24)
    assert wlabels == list(labels)
    # Front replication padding.
    np.testing.assert_allclose(windows[0, :3], values[0])
    np.testing.assert_allclose(windows[0, 21:], values[0])


def test_time_embed_and_dfm_loss():
    emb = dualflow.time_embed(0.0, 4)
    np.testing.assert_allclose(emb, [0.0, 1.0, 0.0, 1.0], atol=1e-12)

    v = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert dualflow.dfm_loss_value(v, v, "cos_pair") == pytest.approx(0.0)
    w = np.array([[2.0]])
    w_inv = np.array([[0.5]])
    assert dualflow.dfm_loss_value(w, w_inv, "cos_product_ones") == pytest.approx(0.0)


def test_metrics_helpers():
    assert dualflow.auc([3.0, 2.0, 1.0, 0.0], [1, 1, 0, 0]) == pytest.approx(1.0)
    sweep = dualflow.sweep_threshold([0.9, 0.1], [1, 0])
    assert sweep["f1"] == pytest.approx(1.0)
    adjusted = dualflow.point_adjust([0, 1, 0, 0], [1, 1, 0, 0])
    assert adjusted == [1, 1, 0, 0]


def test_train_score_sample_density_round_trip(tmp_path):
    cfg = tiny_config()
    summary = dualflow.train(cfg, str(tmp_path / "run"))
    assert summary["steps"] == 40
    assert math.isfinite(summary["final_loss"])
    ckpt = summary["checkpoint_dir"]

    metrics = dualflow.score(ckpt, str(tmp_path / "score"), solver="euler", steps=4)
    assert metrics["solver_tag"] == "F"
    assert metrics["labels_present"]
    assert 0.0 <= metrics["auc"] <= 1.0
    assert metrics["nfe_total"] > 0
    assert (tmp_path / "score" / "metrics.json").exists()
    assert (tmp_path / "score" / "scores.csv").exists()

    v_metrics = dualflow.score(ckpt, solver="dopri5", atol=0.1, rtol=0.01)
    assert v_metrics["solver_tag"] == "V"

    samples = dualflow.sample(ckpt, n=16, seed=0)
    assert samples.shape == (16, 8)

    config_copy = json.loads((tmp_path / "run" / "config.json").read_text())
    assert config_copy["objective"] == "dfm"


def test_density_grid_mass_for_identity_flow(tmp_path):
    cfg = dualflow.default_config()
    cfg["objective"] = "icfm"
    cfg["data"].update(kind="two_moons", n=64)
    cfg["model"].update(hidden=[8], time_embed=4)
    cfg["optimizer"].update(steps=0, batch=16)
    cfg["eval_solver"].update(method="euler", steps=4)
    cfg["trace"].update(kind="exact")
    summary = dualflow.train(cfg, str(tmp_path / "run"))
    grid = dualflow.density_grid(summary["checkpoint_dir"], lo=-3.0, hi=3.0, steps=25)
    cell = 6.0 / 25
    mass = float(grid[:, 3].sum() * cell * cell)
    assert mass == pytest.approx(1.0, abs=0.02)

    logp = dualflow.density_points(summary["checkpoint_dir"], np.zeros((1, 2)))
    assert logp[0] == pytest.approx(-math.log(2 * math.pi), abs=1e-9)


def test_config_validation_raises():
    cfg = dualflow.default_config()
    cfg["objective"] = "unknown"
    with pytest.raises(ValueError):
        dualflow.train(cfg, "/tmp/should_not_exist")
