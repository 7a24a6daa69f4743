import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrpce.errors import StiffnessError
from corrpce.ode import dopri5


def test_exponential_decay():
    res = dopri5(lambda t, y: -y + 1.0, (0, 1), [0.0], [0.0, 0.5, 1.0], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(res.y[:, 0], 1 - np.exp(-res.t), atol=1e-10)
    assert res.y[0, 0] == 0.0


def test_harmonic_oscillator_dense_output():
    f = lambda t, y: np.array([y[1], -y[0]])
    ts = np.linspace(0, 10, 37)
    res = dopri5(f, (0, 10), [1.0, 0.0], ts, rtol=1e-9, atol=1e-11, dense=True)
    np.testing.assert_allclose(res.y[:, 0], np.cos(ts), atol=1e-7)
    for t in (0.123, 4.56, 9.99):
        np.testing.assert_allclose(res.sol(t), [np.cos(t), -np.sin(t)], atol=1e-7)
    with pytest.raises(ValueError):
        res.sol(11.0)


def test_backward_integration():
    res = dopri5(lambda t, y: y, (1, 0), [np.e], [1.0, 0.0], rtol=1e-10, atol=1e-12)
    assert res.y[-1, 0] == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 5.0), st.sampled_from(["rms", "max"]))
def test_tolerance_respected(k, norm):
    res = dopri5(lambda t, y: -k * y, (0, 2), [1.0, 2.0], rtol=1e-8, atol=1e-10, norm=norm)
    np.testing.assert_allclose(res.y[-1], np.array([1.0, 2.0]) * np.exp(-2 * k), rtol=1e-6)


def test_stiffness_error_reports_time():
    # y' = y^2 blows up at t = 1
    with pytest.raises(StiffnessError) as err:
        dopri5(lambda t, y: y * y, (0, 2), [1.0], rtol=1e-6, atol=1e-6)
    assert 0.99 < err.value.t < 1.001
    assert "t=" in str(err.value)


def test_counters_and_rejections():
    res = dopri5(lambda t, y: -50 * (y - np.cos(t)), (0, 1), [0.0], rtol=1e-6, atol=1e-6)
    assert res.n_steps > 0 and res.n_fev >= 6 * res.n_steps


def test_bad_t_eval():
    with pytest.raises(ValueError):
        dopri5(lambda t, y: y, (0, 1), [1.0], [0.5, 0.2])
    with pytest.raises(ValueError):
        dopri5(lambda t, y: y, (0, 1), [1.0], [0.5, 2.0])
