import numpy as np
import pytest

from diffocp.nlp import Iterate
from diffocp.ocp import HessianMode, OcpDimensions, StageQpData, linearize_at
from diffocp.problems import pendulum_ocp, tutorial_ocp
from diffocp.riccati import (
    FactorizationBreakdown,
    assemble_reduced,
    dense_kkt_matrix,
    dense_kkt_oracle,
    full_matvec,
    riccati_factorize,
    riccati_solve,
    solve_full,
    solve_transpose,
)
from factories import random_barrier, random_stage_qp, rel_err
from oracles import scalar_riccati


def reduced_dense(qp, mu, s):
    Qd, _, Gd, _, Hd, _ = qp.dense()
    Qt = Qd + Hd.T @ np.diag(mu / s) @ Hd
    m = Gd.shape[0]
    return np.block([[Qt, Gd.T], [Gd, np.zeros((m, m))]]), Qt


def test_no_inequalities_keeps_stage_hessians():
    qp = random_stage_qp(0, nh=0, nh_N=0)
    red = assemble_reduced(qp, np.zeros(0), np.zeros(0))
    np.testing.assert_allclose(red.Qt, qp.Q, rtol=0, atol=1e-15)
    np.testing.assert_allclose(red.Qt_N, qp.Q_N, rtol=0, atol=1e-15)


def test_scalar_barrier_term():
    d = OcpDimensions(N=1, nx=0, nu=1, nh=1)
    z = np.zeros((1, 0, 0))
    qp = StageQpData(d, np.ones((1, 1, 1)), np.zeros((1, 1)), np.zeros((0, 0)), np.zeros(0), z,
                     np.zeros((1, 0, 1)), np.zeros((1, 0)), np.zeros(0), np.zeros((1, 1, 0)),
                     np.ones((1, 1, 1)), -np.ones((1, 1)), np.zeros((0, 0)), np.zeros(0))
    red = assemble_reduced(qp, np.array([2.0]), np.array([0.5]))
    assert red.Qt[0, 0, 0] == 5.0


def test_reduced_hessian_matches_dense_assembly():
    qp = random_stage_qp(1, N=4, nx=3, nu=2, nh=2, nh_N=1)
    mu, s = random_barrier(qp.dims, 1)
    red = assemble_reduced(qp, mu, s)
    d = qp.dims
    _, Qt_dense = reduced_dense(qp, mu, s)
    for n in range(d.N):
        sl = d.stage_slice(n)
        np.testing.assert_allclose(red.Qt[n], Qt_dense[sl, sl], rtol=1e-13, atol=1e-13)


def test_nonpositive_barrier_is_rejected():
    qp = random_stage_qp(2, nh=2)
    n = qp.dims.n_h
    with pytest.raises(ValueError):
        assemble_reduced(qp, np.zeros(n), np.ones(n))


def test_scalar_lqr_cost_to_go():
    d = OcpDimensions(N=2, nx=1, nu=1)
    eye = np.eye(2)[None].repeat(2, 0)
    qp = StageQpData(d, eye, np.zeros((2, 2)), np.eye(1), np.zeros(1), np.ones((2, 1, 1)), np.ones((2, 1, 1)),
                     np.zeros((2, 1)), np.zeros(1), np.zeros((2, 0, 1)), np.zeros((2, 0, 1)), np.zeros((2, 0)),
                     np.zeros((0, 1)), np.zeros(0))
    fact = riccati_factorize(assemble_reduced(qp, np.zeros(0), np.zeros(0)))
    np.testing.assert_allclose(fact.P[:, 0, 0], scalar_riccati(2), rtol=1e-15)
    np.testing.assert_allclose(fact.P[:, 0, 0], [1.6, 1.5, 1.0], rtol=1e-15)


def test_single_stage_matches_dense_factorization():
    qp = random_stage_qp(3, N=1, nx=2, nu=2, nh=0, nh_N=0)
    red = assemble_reduced(qp, np.zeros(0), np.zeros(0))
    fact = riccati_factorize(red)
    K, _ = reduced_dense(qp, np.zeros(0), np.ones(0))
    rhs = np.random.default_rng(0).standard_normal(K.shape[0])
    nz = qp.dims.n_z
    dz, dl = riccati_solve(fact, red, rhs[:nz], rhs[nz:])
    np.testing.assert_allclose(np.concatenate([dz, dl]), -np.linalg.solve(K, rhs), rtol=1e-12)


def test_zero_rhs_gives_zero_step():
    qp = random_stage_qp(4)
    mu, s = random_barrier(qp.dims, 4)
    red = assemble_reduced(qp, mu, s)
    fact = riccati_factorize(red)
    dz, dl = riccati_solve(fact, red, np.zeros(qp.dims.n_z), np.zeros(qp.dims.n_g))
    assert not dz.any() and not dl.any()
    step = solve_full(fact, red, np.zeros(qp.dims.n_w))
    assert not step.flat().any()
    assert not solve_transpose(fact, red, qp, mu, s, np.zeros(qp.dims.n_w)).any()


def test_unit_image_round_trip():
    qp = random_stage_qp(5, N=3, nx=2, nu=1, nh=1, nh_N=1)
    mu, s = random_barrier(qp.dims, 5)
    red = assemble_reduced(qp, mu, s)
    fact = riccati_factorize(red)
    K, _ = reduced_dense(qp, mu, s)
    nz = qp.dims.n_z
    for k in (0, nz - 1, nz, K.shape[0] - 1):
        e = np.zeros(K.shape[0])
        e[k] = 1.0
        b = K @ e
        dz, dl = riccati_solve(fact, red, b[:nz], b[nz:])
        np.testing.assert_allclose(np.concatenate([dz, dl]), -e, atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_reduced_solve_matches_dense(seed):
    qp = random_stage_qp(seed, N=int(np.random.default_rng(seed).integers(1, 6)), nx=3, nu=2)
    mu, s = random_barrier(qp.dims, seed, spread=1.0)
    red = assemble_reduced(qp, mu, s)
    fact = riccati_factorize(red)
    K, _ = reduced_dense(qp, mu, s)
    rhs = np.random.default_rng(seed).standard_normal((K.shape[0], 3))
    nz = qp.dims.n_z
    dz, dl = riccati_solve(fact, red, rhs[:nz], rhs[nz:])
    assert rel_err(np.vstack([dz, dl]), -np.linalg.solve(K, rhs)) <= 1e-10


@pytest.mark.parametrize("seed", range(20))
def test_full_and_transpose_solves_match_dense(seed):
    qp = random_stage_qp(seed)
    mu, s = random_barrier(qp.dims, seed)
    red = assemble_reduced(qp, mu, s)
    fact = riccati_factorize(red)
    rhs = np.random.default_rng(seed).standard_normal(qp.dims.n_w)
    M = dense_kkt_matrix(qp, mu, s)
    step = solve_full(fact, red, rhs)
    assert np.abs(M @ step.flat() + rhs).max() <= 1e-10 * max(1.0, np.abs(M).max() * np.abs(step.flat()).max())
    assert rel_err(step.flat(), dense_kkt_oracle(qp, mu, s, rhs).flat()) <= 1e-10
    x = solve_transpose(fact, red, qp, mu, s, rhs)
    assert rel_err(x, dense_kkt_oracle(qp, mu, s, rhs, transpose=True).flat()) <= 1e-10


def test_transpose_equals_forward_without_inequalities():
    qp = random_stage_qp(6, nh=0, nh_N=0)
    red = assemble_reduced(qp, np.zeros(0), np.zeros(0))
    fact = riccati_factorize(red)
    nu = np.random.default_rng(6).standard_normal(qp.dims.n_w)
    x = solve_transpose(fact, red, qp, np.zeros(0), np.zeros(0), nu)
    np.testing.assert_allclose(x, -solve_full(fact, red, nu).flat(), rtol=1e-12, atol=1e-13)


def test_structured_products_match_dense_matrix():
    qp = random_stage_qp(7)
    mu, s = random_barrier(qp.dims, 7)
    M = dense_kkt_matrix(qp, mu, s)
    v = np.random.default_rng(7).standard_normal(qp.dims.n_w)
    step = solve_full(riccati_factorize(assemble_reduced(qp, mu, s)), assemble_reduced(qp, mu, s), v)
    np.testing.assert_allclose(full_matvec(qp, mu, s, step), M @ step.flat(), rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(full_matvec(qp, mu, s, step, transpose=True), M.T @ step.flat(), rtol=1e-13, atol=1e-12)


def test_refinement_recovers_accuracy_with_huge_barrier_weights():
    # every other bound is numerically active (s = 1e-13) while LICQ holds, so
    # the full matrix is well conditioned but the reduced one is not
    qp = random_stage_qp(8, N=5, nx=3, nu=2, nh=1, nh_N=0)
    d = qp.dims
    rng = np.random.default_rng(8)
    mu = rng.uniform(0.5, 2.0, d.n_h)
    s = np.where(np.arange(d.n_h) % 2 == 0, 1e-13, 1.0)
    assert np.linalg.cond(dense_kkt_matrix(qp, mu, s)) < 1e6
    red = assemble_reduced(qp, mu, s)
    fact = riccati_factorize(red)
    rhs = rng.standard_normal(d.n_w)
    ref = dense_kkt_oracle(qp, mu, s, rhs).flat()
    assert rel_err(solve_full(fact, red, rhs).flat(), ref) > 1e-8
    assert rel_err(solve_full(fact, red, rhs, refine=2).flat(), ref) <= 1e-10
    ref_t = dense_kkt_oracle(qp, mu, s, rhs, transpose=True).flat()
    assert rel_err(solve_transpose(fact, red, qp, mu, s, rhs, refine=2), ref_t) <= 1e-10


def test_tutorial_step_matches_hand_solve():
    # one stage, scalar: [[2, -1, 1], rows of H, S/M] closed form
    ocp = tutorial_ocp()
    w = Iterate(np.array([0.2]), np.zeros(0), np.array([0.5, 0.3]), np.array([1.2, 0.8]))
    qp = linearize_at(ocp, w, [0.5])
    red = assemble_reduced(qp, w.mu, w.s)
    fact = riccati_factorize(red)
    assert fact.L[0, 0, 0] ** 2 == pytest.approx(2 + 0.5 / 1.2 + 0.3 / 0.8, rel=1e-15)
    rhs = np.array([0.1, 0.2, -0.3, 0.05, 0.07])
    step = solve_full(fact, red, rhs)
    np.testing.assert_allclose(step.flat(), dense_kkt_oracle(qp, w.mu, w.s, rhs).flat(), rtol=1e-13)


def test_indefinite_control_block_breaks_down():
    qp = random_stage_qp(9, N=2, nx=1, nu=1, nh=0, nh_N=0)
    Q = qp.Q.copy()
    Q[1, 1, 1] = -100.0
    bad = StageQpData(qp.dims, Q, qp.q, qp.Q_N, qp.q_N, qp.A, qp.B, qp.b, qp.g0, qp.C, qp.D, qp.h_val,
                      qp.C_N, qp.h_val_N)
    with pytest.raises(FactorizationBreakdown) as info:
        riccati_factorize(assemble_reduced(bad, np.zeros(0), np.zeros(0)))
    assert info.value.stage == 1


def test_indefinite_state_hessian_is_fine_when_projected_positive():
    # negative curvature on x_1 is allowed: x_1 is fixed by the dynamics
    qp = random_stage_qp(10, N=2, nx=1, nu=1, nh=0, nh_N=0)
    Q = qp.Q.copy()
    Q[1, 0, 0] = -5.0
    Q[1, 0, 1] = Q[1, 1, 0] = 0.0
    ind = StageQpData(qp.dims, Q, qp.q, qp.Q_N + 20.0, qp.q_N, qp.A, qp.B, qp.b, qp.g0, qp.C, qp.D, qp.h_val,
                      qp.C_N, qp.h_val_N)
    red = assemble_reduced(ind, np.zeros(0), np.zeros(0))
    fact = riccati_factorize(red)
    rhs = np.random.default_rng(10).standard_normal(ind.dims.n_w)
    assert rel_err(solve_full(fact, red, rhs).flat(), dense_kkt_oracle(ind, np.zeros(0), np.zeros(0), rhs).flat()) <= 1e-10


def test_pendulum_kkt_matches_dense_oracle():
    ocp = pendulum_ocp(N=6)
    d = ocp.dims
    rng = np.random.default_rng(11)
    w0 = ocp.default_iterate([1.0])
    w = Iterate(w0.z, rng.standard_normal(d.n_g) * 0.1, rng.uniform(0.1, 1, d.n_h), rng.uniform(0.1, 1, d.n_h))
    qp = linearize_at(ocp, w, [1.0], HessianMode.gauss_newton())
    red = assemble_reduced(qp, w.mu, w.s)
    rhs = rng.standard_normal(d.n_w)
    step = solve_full(riccati_factorize(red), red, rhs)
    assert rel_err(step.flat(), dense_kkt_oracle(qp, w.mu, w.s, rhs).flat()) <= 1e-10
