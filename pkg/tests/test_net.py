import json

import numpy as np
import pytest

from pinndae.errors import ArgumentError
from pinndae.net import Network, NetworkSpec, ScalingSpec, build_tape, glorot_bound


def make(seed=0, widths=(5, 4), n_in=3, n_out=2, out_act="identity", act="tanh"):
    spec = NetworkSpec(n_in, list(widths), n_out, act, out_act, seed)
    scaling = ScalingSpec([0.0, -1.0, 2.0][:n_in], [10.0, 1.0, 4.0][:n_in], [1.0] * n_out)
    return Network.init(spec, scaling)


def test_spec_validation():
    with pytest.raises(ArgumentError):
        NetworkSpec(2, [], 1)
    with pytest.raises(ArgumentError):
        NetworkSpec(2, [3], 1, hidden_activation="relu")
    with pytest.raises(ArgumentError):
        ScalingSpec([0.0], [0.0])


def test_param_count_and_roundtrip():
    net = make()
    assert net.spec.n_params == 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2
    flat = net.get_params()
    net.set_params(flat * 2)
    np.testing.assert_array_equal(net.get_params(), flat * 2)
    with pytest.raises(ArgumentError):
        net.set_params(flat[:-1])


def test_glorot_init_is_bounded_and_seeded():
    a, b, c = make(1), make(1), make(2)
    np.testing.assert_array_equal(a.get_params(), b.get_params())
    assert not np.array_equal(a.get_params(), c.get_params())
    assert np.all(np.abs(a.weights[0]) <= glorot_bound(3, 5))
    assert all(np.all(bias == 0) for bias in a.biases)


def test_normalization_maps_box_to_unit_interval():
    s = ScalingSpec([0.0, 10.0], [2.0, 20.0])
    np.testing.assert_allclose(s.normalize([[0.0, 10.0], [2.0, 20.0]]), [[-1, -1], [1, 1]])
    np.testing.assert_allclose(s.denormalize(s.normalize([[0.5, 13.0]])), [[0.5, 13.0]])


@pytest.mark.parametrize("out_act", ["identity", "sigmoid"])
@pytest.mark.parametrize("act", ["tanh", "sigmoid"])
def test_batched_network_agrees_with_tape(out_act, act):
    net = make(seed=4, out_act=out_act, act=act)
    rng = np.random.default_rng(0)
    X = rng.uniform([0, -1, 2], [10, 1, 4], size=(4, 3))
    Y, dY, _ = net.forward(X, with_time=True)
    for x, y, dy in zip(X, Y, dY):
        tape, _ = build_tape(net, x)
        np.testing.assert_allclose(tape.forward(x, net.get_params()), y, rtol=1e-13)
        np.testing.assert_allclose(tape.time_derivative(x, net.get_params(), 0), dy,
                                   rtol=1e-11, atol=1e-15)


def test_backward_matches_tape_vjp():
    net = make(seed=5)
    rng = np.random.default_rng(1)
    X = rng.uniform([0, -1, 2], [10, 1, 4], size=(3, 3))
    gY = rng.normal(size=(3, 2))
    gdY = rng.normal(size=(3, 2))
    _, _, cache = net.forward(X, with_time=True, keep=True)
    grad = net.backward(cache, gY, gdY)
    # reference: output adjoints on the tape, time-derivative adjoints by
    # central differences of the tape's forward-mode tangent
    ref = np.zeros_like(grad)
    p0 = net.get_params()
    for x, gy, gdy in zip(X, gY, gdY):
        tape, outs = build_tape(net, x)
        for k, o in enumerate(outs):
            ref += gy[k] * np.array(tape.backward(o.id))
        h = 1e-6
        for i in range(p0.size):
            pp, pm = p0.copy(), p0.copy()
            pp[i] += h
            pm[i] -= h
            dp = np.array(tape.time_derivative(x, pp, 0))
            dm = np.array(tape.time_derivative(x, pm, 0))
            ref[i] += gdy @ (dp - dm) / (2 * h)
    np.testing.assert_allclose(grad, ref, rtol=1e-6, atol=1e-9)


def test_predict_layout_and_arity_check():
    net = make()
    y = net.predict([0.0, 1.0], x0m=[0.5], u=[3.0])
    np.testing.assert_allclose(y, net(np.array([[0.0, 0.5, 3.0], [1.0, 0.5, 3.0]])))
    with pytest.raises(ArgumentError):
        net.predict([0.0], x0m=[0.5])


def test_checkpoint_roundtrip_is_bit_exact(tmp_path):
    net = make(seed=9)
    path = tmp_path / "net.json"
    net.save(path, {"variant": "pinn-c", "outputs": ["a", "b"]})
    back = Network.load(path)
    np.testing.assert_array_equal(back.get_params(), net.get_params())
    doc = json.loads(path.read_text())
    assert doc["schema"] == 1 and doc["metadata"]["outputs"] == ["a", "b"]
