import numpy as np
import pytest

from diffocp.nlp import (
    DenseQp,
    EvaluationError,
    Iterate,
    KktResidual,
    eval_kkt_residual,
    lagrangian_value_grad,
    strict_complementarity_margin,
)
from diffocp.problems import tutorial_ocp
from oracles import tutorial_smoothed


def tutorial_point(z, mu, s):
    return Iterate(np.array([z]), np.zeros(0), np.asarray(mu, float), np.asarray(s, float))


def test_tutorial_interior_solution_is_exact_kkt_point():
    view = tutorial_ocp().dense_view()
    res = eval_kkt_residual(view, tutorial_point(0.25, [0, 0], [1.25, 0.75]), 0.0, [0.5])
    assert res.inf_norm == 0.0


def test_tutorial_smoothed_active_bound():
    z, mu, s = tutorial_smoothed(2.0, 1e-3)
    assert z == pytest.approx(0.9998333564781384, abs=1e-15)
    view = tutorial_ocp().dense_view()
    res = eval_kkt_residual(view, tutorial_point(z, mu, s), 1e-3, [2.0])
    assert res.inf_norm <= 1e-10


def test_residual_blocks_and_norms():
    r = KktResidual(np.array([1.0, -3.0]), np.array([0.5]), np.zeros(0), np.array([-2.0]))
    assert r.inf_norm == 3.0
    assert r.feas_norm == 3.0
    assert r.comp_norm == 2.0


def test_margin_and_active_set():
    d = strict_complementarity_margin(tutorial_point(0.0, [1e-8, 2.0], [3.0, 1e-8]))
    assert d.active_set.tolist() == [False, True]
    assert d.strict_comp_margin == 2.0


def test_margin_without_inequalities():
    d = strict_complementarity_margin(Iterate(np.zeros(2), np.zeros(0), np.zeros(0), np.zeros(0)))
    assert d.active_set.size == 0
    assert d.strict_comp_margin == np.inf


def random_qp(seed, n=4, m=1, p=3, k=2):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    return DenseQp(M @ M.T + np.eye(n), rng.standard_normal(n), rng.standard_normal((m, n)), rng.standard_normal(m),
                   rng.standard_normal((p, n)), rng.standard_normal(p), Cq=rng.standard_normal((n, k)))


def test_lagrangian_without_multipliers_is_the_objective():
    qp = random_qp(0)
    z = np.arange(4.0)
    w = Iterate(z, np.zeros(1), np.zeros(3), np.ones(3))
    val, grad = lagrangian_value_grad(qp, w, np.ones(2))
    assert val == pytest.approx(qp.f(z, np.ones(2)))
    np.testing.assert_allclose(grad, qp.grad_f(z, np.ones(2)))


def test_lagrangian_at_tutorial_origin():
    view = tutorial_ocp().dense_view()
    val, grad = lagrangian_value_grad(view, tutorial_point(0.0, [0, 0], [1, 1]), [0.0])
    assert val == 0.0
    np.testing.assert_array_equal(grad, [0.0])


def test_lagrangian_gradient_matches_fd():
    qp = random_qp(3)
    rng = np.random.default_rng(1)
    w = Iterate(rng.standard_normal(4), rng.standard_normal(1), rng.uniform(0.1, 1, 3), np.ones(3))
    theta = rng.standard_normal(2)
    _, grad = lagrangian_value_grad(qp, w, theta)
    h = 1e-6
    fd = []
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        up = lagrangian_value_grad(qp, Iterate(w.z + e, w.lam, w.mu, w.s), theta)[0]
        dn = lagrangian_value_grad(qp, Iterate(w.z - e, w.lam, w.mu, w.s), theta)[0]
        fd.append((up - dn) / (2 * h))
    np.testing.assert_allclose(grad, fd, rtol=1e-6)


def test_non_finite_evaluation_is_reported():
    qp = random_qp(0)
    w = Iterate(np.array([np.nan, 0, 0, 0]), np.zeros(1), np.ones(3), np.ones(3))
    with pytest.raises(EvaluationError):
        eval_kkt_residual(qp, w, 0.0, np.zeros(2))


def test_iterate_flat_round_trip():
    w = Iterate(np.arange(3.0), np.arange(2.0), np.ones(1), np.full(1, 2.0))
    back = Iterate.from_flat(w.flat(), 3, 2, 1)
    np.testing.assert_array_equal(back.flat(), w.flat())
    with pytest.raises(ValueError):
        Iterate.from_flat(np.zeros(5), 3, 2, 1)
