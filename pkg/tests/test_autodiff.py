import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinndae import autodiff as ad
from pinndae.errors import ArgumentError, EvaluationError, StateError


def test_product_gradient_and_docstring_example():
    tape = ad.Tape()
    x = tape.input(2.0)
    y = tape.param(3.0)
    f = x * y
    tape.mark_output(f)
    assert tape.backward(f.id) == [2.0]
    assert tape.forward([5.0], [3.0]) == [15.0]


def test_time_derivative_of_composite():
    tape = ad.Tape()
    t = tape.input(0.3)
    w = tape.param(1.7)
    out = ad.tanh(w * t) + ad.exp(t) / (1.0 + t * t)
    tape.mark_output(out)
    (dt,) = tape.time_derivative([0.3], [1.7], 0)
    expected = 1.7 * (1 - math.tanh(0.51) ** 2) + math.exp(0.3) * (1 / 1.09 - 0.6 / 1.09 ** 2)
    assert dt == pytest.approx(expected, rel=1e-14)


def test_sqrt_at_zero_and_division_by_zero_raise():
    tape = ad.Tape()
    x = tape.input(0.0)
    with pytest.raises(EvaluationError) as err:
        ad.sqrt(x)
    assert err.value.node_id is not None
    with pytest.raises(EvaluationError):
        1.0 / x


def test_overflow_is_reported_not_propagated():
    tape = ad.Tape()
    x = tape.input(1000.0)
    with pytest.raises(EvaluationError):
        ad.exp(x)


def test_backward_before_forward_is_a_state_error():
    tape = ad.Tape()
    x = tape.input()
    y = x * 2.0
    tape.mark_output(y)
    with pytest.raises(StateError):
        tape.backward(y.id)


def test_time_index_out_of_range():
    tape = ad.Tape()
    x = tape.input(1.0)
    tape.mark_output(x * x)
    with pytest.raises(ArgumentError):
        tape.time_derivative([1.0], [], 3)


def test_variable_power_exponent_rejected():
    tape = ad.Tape()
    x = tape.input(2.0)
    with pytest.raises(ArgumentError):
        x ** x


def test_mixing_tapes_rejected():
    a, b = ad.Tape(), ad.Tape()
    with pytest.raises(ArgumentError):
        a.input(1.0) + b.input(1.0)


def test_array_values_evaluate_pointwise():
    tape = ad.Tape()
    x = tape.input(np.array([1.0, 2.0, 3.0]))
    c = tape.param(2.0)
    f = ad.sigmoid(x * c) * x
    tape.backward_seeded({f.id: np.ones(3)})
    s = 1 / (1 + np.exp(-2 * np.arange(1, 4)))
    expected = s + np.arange(1, 4) * s * (1 - s) * 2
    np.testing.assert_allclose(x.adjoint, expected, rtol=1e-14)
    # parameter adjoint is summed over the points
    assert c.adjoint == pytest.approx(np.sum(np.arange(1, 4) ** 2 * s * (1 - s)))


def test_numpy_arrays_defer_to_var_operators():
    tape = ad.Tape()
    x = tape.input(np.array([1.0, 2.0]))
    f = np.array([3.0, 4.0]) * x
    assert isinstance(f, ad.Var)
    np.testing.assert_array_equal(f.value, [3.0, 8.0])


def test_sigmoid_is_stable_at_extremes():
    assert ad._sigmoid(-800.0) == 0.0
    assert ad._sigmoid(800.0) == 1.0
    assert isinstance(ad._sigmoid(0.0), float)


finite = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(finite, finite, finite)
def test_reverse_matches_central_differences(a, b, t):
    def build(pa, pb):
        tape = ad.Tape()
        x = tape.input(t)
        p, q = tape.param(pa), tape.param(pb)
        f = ad.tanh(p * x + q) * ad.sigmoid(q - x) + (p * p + 1.0) ** 0.5 / (2.0 + x * x)
        tape.mark_output(f)
        return tape, f

    tape, f = build(a, b)
    grad = tape.backward(f.id)
    h = 1e-6
    for k in range(2):
        hi = [a, b]
        lo = [a, b]
        hi[k] += h
        lo[k] -= h
        fd = (build(*hi)[1].value - build(*lo)[1].value) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-6, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(finite, finite)
def test_forward_mode_matches_reverse_mode(t, w):
    tape = ad.Tape()
    x = tape.input(t)
    p = tape.param(w)
    f = ad.exp(ad.tanh(x * p)) - x / (1.0 + ad.sigmoid(x))
    tape.mark_output(f)
    (tangent,) = tape.time_derivative([t], [w], 0)
    tape.backward_seeded({f.id: 1.0})
    assert tangent == pytest.approx(x.adjoint, rel=1e-12, abs=1e-14)
