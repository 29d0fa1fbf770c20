import json

import numpy as np
import pytest

from pinndae import harness as H
from pinndae.errors import ArgumentError, MetricError

TINY = {"adam": {"epochs": 5}, "lbfgs": {"epochs": 3}}


def test_mape_examples():
    assert H.mape([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert H.mape([2.0], [1.0]) == 100.0
    assert H.mape([1.0, 3.0], [2.0, 2.0]) == 50.0
    with pytest.raises(MetricError):
        H.mape([1.0], [0.0])
    with pytest.raises(ArgumentError):
        H.mape([1.0, 2.0], [1.0])


def test_r2_examples():
    t = np.array([1.0, 2.0, 4.0])
    assert H.r2(t, t) == 1.0
    assert H.r2(np.full(3, t.mean()), t) == pytest.approx(0.0)
    assert H.r2([0.0, 0.0], [-1.0, 1.0]) == 0.0
    with pytest.raises(MetricError):
        H.r2([1.0, 2.0], [3.0, 3.0])
    with pytest.raises(MetricError):
        H.r2([1.0], [1.0])


def test_config_validation_and_env_overrides(tmp_path):
    with pytest.raises(ArgumentError):
        H.ExperimentConfig("cstr", "pinn-base")
    with pytest.raises(ArgumentError):
        H.ExperimentConfig("cstr", "pinn-b", setting=2)
    with pytest.raises(ArgumentError):
        H.ExperimentConfig("separator", "vanilla", extrapolation=True)
    with pytest.raises(ArgumentError):
        H.ExperimentConfig.from_dict({"model_id": "cstr", "variant": "vanilla", "bogus": 1}, env={})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model_id": "cstr", "variant": "pinn-c", "setting": 2, "seed": 1}))
    cfg = H.ExperimentConfig.from_file(path, env={"PINNDAE_SEED": "7", "PINNDAE_OUT": "/x"},
                                       paper_scale=True)
    assert (cfg.seed, cfg.out_dir, cfg.n_datasets, cfg.n_runs) == (7, "/x", 5, 5)
    assert cfg.tag == "pinn-c-s2-low"
    assert H.ExperimentConfig.from_file(path, env={}).n_datasets == 2


def test_incidence_report_examples():
    _, v1 = H.incidence_report("cstr", "pinn-c", 1)
    _, v2 = H.incidence_report("cstr", "pinn-c", 2)
    assert v1["full_column_rank"] is False and v2["full_column_rank"] is True
    texts = [H.incidence_report("separator", v)[0] for v in ("pinn-base", "pinn-d32", "pinn-d32-rv")]
    assert texts[0] == texts[1] == texts[2] and texts[0].endswith("full column rank: yes")


@pytest.fixture(scope="module")
def cstr_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    cfg = H.ExperimentConfig("cstr", "pinn-c", n_datasets=1, n_runs=2, out_dir=str(out),
                             n_test=3, n_train=2, extrapolation=True, hidden=[6],
                             loss={"n_collocation": 50, "n_init": 10}, schedule=TINY)
    H.run_experiment(cfg)
    return cfg


def test_experiment_artifacts(cstr_run):
    cfg = cstr_run
    doc = json.loads(H.metrics_path(cfg, "test").read_text())
    assert doc["schema"] == 1 and len(doc["runs"]) == 2
    assert set(doc["runs"][0]["mape"]) == {"cA", "cB", "T", "TK", "k1", "k2", "k3"}
    assert all(r["mape"]["k1"] >= 0 and r["r2"]["T"] <= 1 for r in doc["runs"])
    assert H.metrics_path(cfg, "extrapolation").exists()
    rd = H.run_dir(cfg, 0, 1)
    ck = json.loads((rd / "checkpoint.json").read_text())
    assert ck["schema"] == 1
    assert (rd / "history.csv").read_text().startswith(
        "epoch,phase,mse_data,mse_physics,mse_init,lambda1,lambda2,total\n")
    header = (rd / "test" / "traj-000.csv").read_text().splitlines()[0]
    assert header.startswith("t,cA_pred,cA_true,cB_pred,cB_true")
    assert len(list((rd / "test").glob("*.csv"))) == 3


def test_rerun_is_byte_identical(cstr_run, tmp_path):
    first = H.metrics_path(cstr_run, "test").read_bytes()
    H.run_experiment(cstr_run)
    assert H.metrics_path(cstr_run, "test").read_bytes() == first
    # an independent output directory rebuilds the data and gets the same bytes
    from dataclasses import replace
    other = replace(cstr_run, out_dir=str(tmp_path))
    H.run_experiment(other)
    assert H.metrics_path(other, "test").read_bytes() == first


def test_eval_reads_checkpoints(cstr_run):
    reports = H.eval_matrix(cstr_run, "extrapolation")
    doc = json.loads(H.metrics_path(cstr_run, "extrapolation").read_text())
    assert [r.to_dict() for r in reports] == doc["runs"]
    text = H.report(cstr_run.out_dir)
    assert "split=test" in text and "split=extrapolation" in text and "median" in text


def test_missing_checkpoint_is_recorded(tmp_path):
    cfg = H.ExperimentConfig("cstr", "vanilla", n_datasets=1, n_runs=1, out_dir=str(tmp_path),
                             n_test=2, n_train=1)
    [rep] = H.eval_matrix(cfg)
    assert rep.status == "missing"
    assert "missing" in H.render_metrics(json.loads(H.metrics_path(cfg, "test").read_text()))


def test_separator_vanilla_has_no_rate_columns(tmp_path):
    cfg = H.ExperimentConfig("separator", "vanilla", n_datasets=1, n_runs=1, out_dir=str(tmp_path),
                             n_test=1, n_train=1, n_segments=20, hidden=[4],
                             loss={"n_init": 5}, schedule=TINY)
    [rep] = H.run_experiment(cfg)
    assert set(rep.mape) == {"h_DPZ", "h_aq"}
    base = H.ExperimentConfig("separator", "pinn-base", n_datasets=1, n_runs=1,
                              out_dir=str(tmp_path), n_test=1, n_train=1, n_segments=20,
                              hidden=[4], loss={"n_init": 5, "n_collocation": 20}, schedule=TINY)
    [rep] = H.run_experiment(base)
    assert set(rep.mape) == {"h_DPZ", "h_aq", "Vc", "Vs"}


def test_diverged_run_is_recorded_and_matrix_continues(tmp_path, monkeypatch):
    from pinndae import training
    from pinndae.errors import TrainingError
    calls = []

    def boom(*a, **k):
        calls.append(1)
        raise TrainingError("loss diverged", 0, [])
    monkeypatch.setattr(training, "train", boom)
    cfg = H.ExperimentConfig("cstr", "vanilla", n_datasets=1, n_runs=2, out_dir=str(tmp_path),
                             n_test=2, n_train=1)
    reports = H.run_experiment(cfg)
    assert len(calls) == 2 and [r.status for r in reports] == ["diverged", "diverged"]


def test_segment_dump(tmp_path):
    r = H.dump_segments(tmp_path / "s.csv", n_segments=10)
    assert r.Vs > 0 and len((tmp_path / "s.csv").read_text().splitlines()) == 11
