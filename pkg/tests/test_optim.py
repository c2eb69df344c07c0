import numpy as np
import pytest

from gognn.errors import NonFiniteError
from gognn.optim import Adam, adam_step
from gognn.tensor import Tensor


def _param(values):
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


def test_zero_gradient_leaves_parameters_and_decays_moments():
    p = _param([1.0, -2.0])
    opt = Adam([("p", p)], lr=0.1)
    p.grad = np.array([1.0, 1.0])
    opt.step()
    m, v = opt.m[0].copy(), opt.v[0].copy()
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_allclose(opt.m[0], 0.9 * m)
    np.testing.assert_allclose(opt.v[0], 0.999 * v)

    q = _param([3.0])
    fresh = Adam([("q", q)], lr=0.1)
    q.grad = np.zeros(1)
    for _ in range(5):
        fresh.step()
    assert q.data[0] == 3.0


def test_constant_gradient_update_tends_to_lr_sign():
    p = _param([0.0, 0.0])
    opt = Adam([("p", p)], lr=0.01)
    last = p.data.copy()
    for _ in range(2000):
        p.grad = np.array([3.5, -0.02])
        opt.step()
        step, last = p.data - last, p.data.copy()
    np.testing.assert_allclose(step, [-0.01, 0.01], rtol=1e-5)


def test_scalar_quadratic_matches_recurrence():
    # minimise (w - 3)^2 from w = 0 and compare with a hand-written recurrence
    w = _param([0.0])
    opt = Adam([("w", w)], lr=0.01)
    ref, m, v = 0.0, 0.0, 0.0
    for t in range(1, 201):
        w.grad = 2 * (w.data - 3.0)
        opt.step()
        g = 2 * (ref - 3.0)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert abs(w.data[0] - ref) < 1e-12


def test_quadratic_converges():
    w = _param([2.0])
    opt = Adam([("w", w)], lr=0.01)
    for _ in range(1000):
        w.grad = 2 * (w.data - 2.4)
        opt.step()
    assert abs(w.data[0] - 2.4) < 1e-3


def test_functional_form_agrees_with_class():
    a, b = _param([0.5, -1.0]), np.array([0.5, -1.0])
    opt, state = Adam([("a", a)], lr=0.05), {}
    for k in range(30):
        g = np.array([np.sin(k), np.cos(k)])
        a.grad = g.copy()
        opt.step()
        adam_step([b], [g], state, 0.05)
    np.testing.assert_allclose(a.data, b, atol=1e-14)


def test_non_finite_gradient_names_parameter_and_skips_update():
    a, b = _param([1.0]), _param([2.0])
    opt = Adam([("layer.a", a), ("layer.b", b)], lr=0.1)
    a.grad = np.array([1.0])
    b.grad = np.array([np.nan])
    with pytest.raises(NonFiniteError, match="layer.b"):
        opt.step()
    assert a.data[0] == 1.0 and opt.t == 0


def test_warmup_ramps_step_size_linearly():
    p = _param([0.0])
    opt = Adam([("p", p)], lr=0.1, warmup=4)
    steps = []
    for _ in range(6):
        before = p.data.copy()
        p.grad = np.array([1.0])  # constant gradient: unwarmed steps are exactly lr
        opt.step()
        steps.append(float(before[0] - p.data[0]))
    np.testing.assert_allclose(steps, [0.025, 0.05, 0.075, 0.1, 0.1, 0.1], rtol=1e-6)
    with pytest.raises(ValueError):
        Adam([("p", p)], warmup=-1)
