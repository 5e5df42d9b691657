import json

import numpy as np
import pytest

from conftest import tiny_config_dict
from touchauth.classifiers import AuthModel
from touchauth.errors import ConfigError
from touchauth.pipeline import (
    STAGES,
    Experiment,
    ExperimentConfig,
    augment,
    fit_gan_pair,
    fit_shared,
    run_experiment,
    stage_seed,
    train_user_model,
    training_set,
)


@pytest.fixture(scope="module")
def exp():
    return Experiment.load(ExperimentConfig.from_dict(tiny_config_dict()))


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"classifiers": []})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": ["population"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": ["random"], "train_fraction": 1.5})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": ["random"], "gan": {"epochs": 0}})
    cfg = ExperimentConfig.from_dict(tiny_config_dict())
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_config_load_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scenarios: [zero_same, random]\nseeds: [3]\nmlp: {epochs: 2}\n")
    cfg = ExperimentConfig.load(p)
    assert cfg.seeds == (3,) and cfg.mlp.epochs == 2
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.yaml")


def test_stage_seed_is_stable():
    assert stage_seed(0, "a", 1) == stage_seed(0, "a", 1)
    assert stage_seed(0, "a", 1) != stage_seed(0, "a", 2)


def test_training_labels(exp):
    user = exp.users[0]
    X, y = training_set(exp.base, user)
    n_gen = len(exp.base.train.windows[user])
    assert (y == 1).sum() == n_gen
    assert (y == 0).sum() == sum(len(w) for u, w in exp.base.train.windows.items() if u != user)


def test_augment_appends_exact_counts(exp):
    user = exp.users[0]
    sh = fit_shared(exp.base, user, "mlp", exp.cfg, 0)
    pair = fit_gan_pair(sh.X, sh.y, exp.cfg, 5)
    X2, y2 = augment(sh.X, sh.y, pair, 250, 0)
    assert len(X2) == len(sh.X) + 500
    assert (y2[len(sh.y):] == 1).sum() == 250 and (y2[len(sh.y):] == 0).sum() == 250
    X3, _ = augment(sh.X, sh.y, None, 250, 0)
    assert len(X3) == len(sh.X)


def test_v_and_g_share_normalizer_and_selector(exp):
    user = exp.users[1]
    sh = fit_shared(exp.base, user, "rf", exp.cfg, 0)
    v = train_user_model(exp.base, user, exp.cfg, "V", "rf", 0, sh)
    g = train_user_model(exp.base, user, exp.cfg, "G", "rf", 0, sh)
    assert v.gan_pair is None and g.gan_pair is not None
    assert v.info["hashes"]["normalizer"] == g.info["hashes"]["normalizer"]
    assert v.info["hashes"]["selector"] == g.info["hashes"]["selector"]
    assert "gan_augment" not in v.info["stages"] and g.info["stages"] == list(STAGES)
    assert g.info["synth_count"] in (10, 20)
    back = AuthModel.from_dict(json.loads(json.dumps(g.to_dict())))
    raw = exp.base.test.windows[user]
    assert np.array_equal(back.decide(raw), g.decide(raw))


def test_same_seed_identical_model_bytes(exp):
    user = exp.users[2]
    a = train_user_model(exp.base, user, exp.cfg, "G", "mlp", 1)
    b = train_user_model(exp.base, user, exp.cfg, "G", "mlp", 1)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_grid_cardinality_and_frr_invariance(exp, tmp_path):
    man = run_experiment(exp.cfg, tmp_path, exp)
    users = len(exp.users)
    assert len(man["reports"]) == users * 1 * 2 * 4
    assert len(man["frr"]) == users * 2
    assert not man["failures"]
    by_model = {}
    for r in man["reports"]:
        by_model.setdefault(r["model_id"], set()).add(r["frr"])
        assert r["hter"] == (r["far"] + r["frr"]) / 2
    assert all(len(v) == 1 for v in by_model.values())
    for name in ("reports.json", "manifest.json", "fairness.json", "heatmap_far.csv", "heatmap_frr.csv"):
        assert (tmp_path / name).exists()
    assert len(list((tmp_path / "models").glob("*.json"))) == users * 2


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    cfg = ExperimentConfig.from_dict(tiny_config_dict(classifiers=["rf"], users=["u0", "u1"]))
    run_experiment(cfg, tmp_path / "a")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    run_experiment(ExperimentConfig.from_dict(manifest["config"]), tmp_path / "b")
    assert (tmp_path / "a" / "reports.json").read_bytes() == (tmp_path / "b" / "reports.json").read_bytes()


def test_empty_scenarios_train_only(tmp_path):
    cfg = ExperimentConfig.from_dict(tiny_config_dict(scenarios=[], architectures=["V"], users=["u0"]))
    man = run_experiment(cfg)
    assert man["reports"] == [] and len(man["models"]) == 1


def test_failures_are_recorded_and_run_continues():
    cfg = ExperimentConfig.from_dict(tiny_config_dict(architectures=["V"], cv_folds=40, users=["u0", "u1"]))
    man = run_experiment(cfg)
    assert len(man["failures"]) == 2 and man["reports"] == []
