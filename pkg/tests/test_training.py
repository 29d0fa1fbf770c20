import numpy as np
import pytest

from pinndae import counterexamples as ce
from pinndae import cstr, registry
from pinndae import training as T
from pinndae.datagen import build_dataset, simulate_rows
from pinndae.errors import ArgumentError, TrainingError


@pytest.fixture(scope="module")
def cstr_data():
    return build_dataset("cstr", n_total=4, n_test=2, n_train=2, seed=3)


def small_problem(system, trajs, n_col=64, n_init=16):
    cfg = T.LossConfig(n_collocation=n_col, n_init=n_init)
    return T.build_problem(system, trajs, cfg, seed=1), cfg


def fd_check(obj, params, idx, h=1e-6):
    _, g = obj(params)
    worst = 0.0
    for i in idx:
        e = np.zeros_like(params)
        e[i] = h
        fd = (obj(params + e)[0] - obj(params - e)[0]) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8))
    return worst


@pytest.mark.parametrize("variant,setting", [("pinn-c", 0), ("pinn-b", 0), ("pinn-a", 0),
                                             ("pinn-c", 2), ("vanilla", 0)])
def test_total_loss_gradient_matches_finite_differences(cstr_data, variant, setting):
    system = cstr.make_system(variant, setting)
    prob, cfg = small_problem(system, cstr_data.train)
    net = T.make_network(system, (8, 8), seed=5)
    obj = T.Objective(net, prob, cfg)
    p = net.get_params()
    idx = np.random.default_rng(0).choice(p.size, 20, replace=False)
    assert fd_check(obj, p, idx) < 1e-5


def test_separator_and_counterexample_gradients():
    sm6 = ce.sm6_system()
    trajs = [simulate_rows(ce.sm6_process(), [{"x1": 1.0, "x2": 1.0}])[0]]
    prob, cfg = small_problem(sm6, trajs)
    net = T.make_network(sm6, (8,), seed=2)
    obj = T.Objective(net, prob, cfg)
    p = net.get_params()
    assert fd_check(obj, p, range(0, p.size, max(1, p.size // 20))) < 1e-5


def test_zero_physics_weights_reduce_to_vanilla(cstr_data):
    pinn = cstr.make_system("pinn-c")
    van = cstr.make_system("vanilla")
    prob_p, _ = small_problem(pinn, cstr_data.train)
    prob_v, _ = small_problem(van, cstr_data.train)
    net_p = T.make_network(pinn, (8, 8), seed=4)
    # vanilla net = pinn net with the rate columns of the last layer removed
    net_v = T.make_network(van, (8, 8), seed=4)
    Wp, bp = net_p.weights[-1], net_p.biases[-1]
    net_v.weights = [w.copy() for w in net_p.weights[:-1]] + [Wp[:, :4].copy()]
    net_v.biases = [b.copy() for b in net_p.biases[:-1]] + [bp[:4].copy()]
    sched = T.OptimizerSchedule(T.AdamConfig(epochs=30), T.LbfgsConfig(epochs=0))
    rp = T.train(net_p, prob_p, T.LossConfig(lambda1=0, lambda2=0, idw=False), sched)
    rv = T.train(net_v, prob_v, T.LossConfig(lambda1=0, idw=False), sched)
    X = van.input_matrix(cstr_data.test[0])
    np.testing.assert_allclose(rp.net(X)[:, :4], rv.net(X), rtol=1e-10, atol=1e-12)


def test_idw_weights_stay_positive_and_finite(cstr_data):
    system = cstr.make_system("pinn-c")
    prob, cfg = small_problem(system, cstr_data.train)
    cfg.idw_period = 1
    net = T.make_network(system, (8,), seed=0)
    res = T.train(net, prob, cfg, T.OptimizerSchedule(T.AdamConfig(epochs=25), T.LbfgsConfig(epochs=0)))
    for row in res.history:
        assert row["lambda1"] > 0 and np.isfinite(row["lambda1"])
        assert row["lambda2"] > 0 and np.isfinite(row["lambda2"])
    w = T.idw_update({"data": 0.0, "physics": 1.0}, {"physics": 2.0})
    assert w == {"physics": 2.0}
    w = T.idw_update({"data": 1.0, "physics": 0.0, "init": 4.0}, {"physics": 2.0, "init": 1.0}, 1.0)
    assert w == {"physics": 2.0, "init": 0.25}


def test_zero_epoch_schedule_returns_network_unchanged(cstr_data):
    system = cstr.make_system("pinn-c")
    prob, cfg = small_problem(system, cstr_data.train)
    net = T.make_network(system, (8,), seed=0)
    before = net.get_params().copy()
    res = T.train(net, prob, cfg, T.OptimizerSchedule(T.AdamConfig(epochs=0), T.LbfgsConfig(epochs=0)))
    np.testing.assert_array_equal(res.net.get_params(), before)
    assert res.history == [] and res.lbfgs_status == "skipped"


def test_sm5_training_drives_loss_to_zero_and_lbfgs_is_monotone():
    system = ce.sm5_system()
    traj = simulate_rows(ce.sm5_process(), [dict(ce.SM5_X0)])[0]
    cfg = T.LossConfig(n_collocation=500, n_init=1)
    prob = T.build_problem(system, [traj], cfg, 0)
    net = T.make_network(system, (32, 32), seed=0)
    res = T.train(net, prob, cfg, T.OptimizerSchedule(T.AdamConfig(epochs=1000), T.LbfgsConfig(epochs=1000)))
    totals = [r["total"] for r in res.history if r["phase"] == "lbfgs"]
    assert totals and all(b <= a for a, b in zip(totals, totals[1:]))
    assert totals[-1] <= 1e-5
    Y = net(np.array([[0.5]]))[0]
    assert Y[1] == pytest.approx(1.0, rel=0.05) and Y[2] == pytest.approx(2.0, rel=0.05)


def test_lbfgs_quadratic():
    res = T.lbfgs_minimize(lambda x: (float(x @ x), 2 * x), np.array([5.0]),
                           T.LbfgsConfig(epochs=20))
    assert abs(res.x[0]) < 1e-8 and res.n_iter <= 20


def test_lbfgs_rosenbrock():
    def rosen(x):
        a, b = x
        f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
        g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
        return f, g
    res = T.lbfgs_minimize(rosen, np.array([-1.2, 1.0]), T.LbfgsConfig(epochs=500, gtol=1e-12))
    assert np.max(np.abs(res.x - 1.0)) < 1e-6
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_lbfgs_zero_gradient_stops_immediately():
    res = T.lbfgs_minimize(lambda x: (1.0, np.zeros(3)), np.ones(3))
    assert res.n_iter == 0 and res.status == "converged"


def test_adam_first_step():
    st = T.AdamState.zeros(1)
    new = T.adam_step(np.array([0.0]), np.array([1.0]), st)
    assert new[0] == pytest.approx(-0.001, rel=1e-6)
    with pytest.raises(TrainingError):
        T.adam_step(np.array([0.0]), np.array([np.nan]), T.AdamState.zeros(1))


def test_argument_validation(cstr_data):
    with pytest.raises(ArgumentError):
        T.LossConfig(lambda1=-1)
    with pytest.raises(ArgumentError):
        T.OptimizerSchedule(T.AdamConfig(epochs=-1))
    with pytest.raises(ArgumentError):
        T.build_problem(cstr.make_system("pinn-c"), [], T.LossConfig())
    van = cstr.make_system("vanilla")
    net = T.make_network(van, (4,), seed=0)
    with pytest.raises(ArgumentError):
        T.loss_physics(net, van, np.zeros((3, 7)))


def test_history_csv(tmp_path, cstr_data):
    system = registry.system("cstr", "pinn-c")
    prob, cfg = small_problem(system, cstr_data.train)
    net = T.make_network(system, (4,), seed=0)
    res = T.train(net, prob, cfg, T.OptimizerSchedule(T.AdamConfig(epochs=3), T.LbfgsConfig(epochs=2)))
    res.write_history(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,phase,mse_data,mse_physics,mse_init,lambda1,lambda2,total"
    assert lines[1].startswith("0,adam,")
