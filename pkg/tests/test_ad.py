import numpy as np
import pytest

from diffocp import ad
from diffocp.ad import Jet, UnsupportedOperation, dual_derivatives
from diffocp.ocp import rk4_step
from diffocp.problems import PENDULUM_X0, cartpole_rhs


def central_jacobian(f, x, h=1e-6):
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def test_product_gradient_and_hessian():
    d = dual_derivatives(lambda x: x[0] ** 2 * x[1], order=2)(np.array([2.0, 3.0]))
    assert d.value == 12.0
    np.testing.assert_allclose(d.jacobian, [12.0, 4.0])
    np.testing.assert_allclose(d.hessian, [[6.0, 4.0], [4.0, 0.0]])


def test_sin_derivative_at_zero():
    d = dual_derivatives(lambda x: ad.sin(x[0]))(np.array([0.0]))
    assert d.jacobian[0] == 1.0


@pytest.mark.parametrize("fn,ref", [
    (ad.cos, lambda v: (-np.sin(v), -np.cos(v))),
    (ad.exp, lambda v: (np.exp(v), np.exp(v))),
    (ad.log, lambda v: (1 / v, -1 / v**2)),
    (ad.sqrt, lambda v: (0.5 / np.sqrt(v), -0.25 * v**-1.5)),
    (ad.tanh, lambda v: (1 - np.tanh(v) ** 2, -2 * np.tanh(v) * (1 - np.tanh(v) ** 2))),
    (ad.tan, lambda v: (1 / np.cos(v) ** 2, 2 * np.tan(v) / np.cos(v) ** 2)),
])
def test_elementary_functions(fn, ref):
    v = 0.7
    d = dual_derivatives(lambda x: fn(x[0]), order=2)(np.array([v]))
    d1, d2 = ref(v)
    assert d.jacobian[0] == pytest.approx(d1, rel=1e-13)
    assert d.hessian[0, 0] == pytest.approx(d2, rel=1e-13)


def test_quotient_and_powers_against_fd():
    f = lambda x: [x[0] / (1 + x[1] ** 2), (x[0] + 2) ** 3 / x[1], 2.0 ** x[0]]
    x = np.array([0.4, 1.3])
    d = dual_derivatives(f, order=2)(x)
    fd = central_jacobian(lambda v: [fi.val if isinstance(fi, Jet) else fi for fi in f(list(v))], x)
    np.testing.assert_allclose(d.jacobian, fd, rtol=1e-8)
    hfd = central_jacobian(lambda v: dual_derivatives(f)(v).jacobian, x, 1e-5)
    np.testing.assert_allclose(d.hessian, hfd, rtol=1e-6, atol=1e-8)


def test_batched_jets_match_scalar_evaluation():
    vals = np.array([0.1, 0.5, -0.3])
    x, y = Jet.variables([vals, 2 * vals], order=2)
    out = ad.sin(x) * y + x * x
    for k, v in enumerate(vals):
        d = dual_derivatives(lambda z: ad.sin(z[0]) * z[1] + z[0] * z[0], order=2)(np.array([v, 2 * v]))
        np.testing.assert_allclose(out.grad[k], d.jacobian, rtol=1e-14)
        np.testing.assert_allclose(out.hess[k], d.hessian, rtol=1e-14)


def test_nonsmooth_operations_are_rejected():
    (x,) = Jet.variables([1.0])
    with pytest.raises(UnsupportedOperation):
        abs(x)
    with pytest.raises(UnsupportedOperation):
        x < 2.0


def test_rk4_pendulum_jacobian_matches_fd():
    dt = 0.04

    def step(v):
        x, u = list(v[:4]), [v[4]]
        return rk4_step(lambda xx, uu, pp: cartpole_rhs(xx, uu, pp[0]), x, u, [1.0], dt)

    v = np.array([0.1, 1.2, -0.3, 0.5, 2.0])
    d = dual_derivatives(step)(v)
    fd = central_jacobian(lambda w: [ad.value(c) for c in step(w)], v)
    np.testing.assert_allclose(d.jacobian, fd, rtol=1e-6, atol=1e-9)


def test_rk4_constant_state():
    out = rk4_step(lambda x, u, p: [0.0 * x[0]], [3.0], [], [], 0.1)
    assert float(ad.value(out[0])) == 3.0


def test_rk4_linear_decay_is_fourth_order_taylor():
    out = rk4_step(lambda x, u, p: [-x[0]], [1.0], [], [], 0.1)
    x1 = float(ad.value(out[0]))
    assert x1 == pytest.approx(0.9048375, abs=1e-12)
    assert abs(x1 - np.exp(-0.1)) <= 1e-7


def test_rk4_pendulum_step_against_fine_integration():
    from scipy.integrate import solve_ivp

    f = lambda t, x: [float(c) for c in cartpole_rhs(x, [0.0], 1.0)]

    def local_error(dt):
        ref = solve_ivp(f, (0, dt), PENDULUM_X0, method="DOP853", rtol=1e-13, atol=1e-14).y[:, -1]
        out = rk4_step(lambda x, u, p: cartpole_rhs(x, u, p[0]), list(PENDULUM_X0), [0.0], [1.0], dt)
        return np.abs(np.array([float(ad.value(c)) for c in out]) - ref).max()

    dt = 0.04
    e1, e2 = local_error(dt), local_error(dt / 2)
    # fifth-order local error: halving the step divides it by about 32
    assert 20 < e1 / e2 < 45
    assert e1 <= 10 * dt**5
