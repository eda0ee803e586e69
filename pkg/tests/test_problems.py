import numpy as np
import pytest

from diffocp.problems import (
    generate_lqr_bench,
    jump_fold_theta,
    many_param_ocp,
    many_param_theta,
    pendulum_ocp,
    random_ocp,
    tutorial_solution,
)
from diffocp.sqp import SqpSettings, solve_nlp


def test_benchmark_parameter_count():
    bench = generate_lqr_bench(n_batch=2)
    assert bench.ocp.dims.n_theta == 248
    assert bench.theta.size == 248
    A, B, b, H = bench.ocp.unpack(bench.theta)
    np.testing.assert_array_equal(H, np.eye(12))
    assert A.shape == (8, 8) and B.shape == (8, 4) and b.shape == (8,)


def test_benchmark_is_reproducible():
    a = generate_lqr_bench(n_batch=5, seed=11)
    b = generate_lqr_bench(n_batch=5, seed=11)
    c = generate_lqr_bench(n_batch=5, seed=12)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.x0s, b.x0s)
    assert not np.array_equal(a.theta, c.theta)


def test_instances_independent_of_batch_size():
    small = generate_lqr_bench(n_batch=3)
    big = generate_lqr_bench(n_batch=10)
    np.testing.assert_array_equal(small.x0s, big.x0s[:3])


def test_loose_bounds_never_active():
    bench = generate_lqr_bench(n_batch=4, N=10)
    for i in range(4):
        res = solve_nlp(bench.instance_ocp(i), bench.theta, None, SqpSettings())
        assert res.converged
        u = res.w.z.reshape(-1)[np.concatenate([np.arange(*bench.ocp.dims.u_index(n).indices(res.w.z.size))
                                                for n in range(10)])]
        assert np.abs(u).max() < 1e4 - 1.0
        assert np.all(res.w.mu < 1e-6)


def test_x0_in_theta_appends_state():
    bench = generate_lqr_bench(n_batch=2, x0_in_theta=True)
    assert bench.ocp.dims.n_theta == 256
    np.testing.assert_array_equal(bench.instance_theta(1)[248:], bench.x0s[1])


def test_tutorial_solution_map():
    z, dz = tutorial_solution(np.array([-2.0, -1.0, 0.5, 1.5]))
    np.testing.assert_array_equal(z, [1.0, 1.0, 0.25, 1.0])
    assert dz[0] == 0.0 and np.isnan(dz[1]) and dz[2] == 1.0 and dz[3] == 0.0


def test_fold_location():
    # the interior local minimizer of x^4 - x^2 - theta x at negative x merges
    # with the local maximizer where 4x^3 - 2x - theta = 0 and 12x^2 - 2 = 0
    x = -1.0 / np.sqrt(6.0)
    assert jump_fold_theta() == pytest.approx(4 * x**3 - 2 * x, rel=1e-14)
    assert jump_fold_theta() == pytest.approx(0.5443310539518174, rel=1e-14)


def test_many_param_has_many_parameters():
    ocp = many_param_ocp()
    assert ocp.dims.N == 40
    assert ocp.dims.n_theta >= 100
    assert many_param_theta().size == ocp.dims.n_theta


def test_pendulum_dimensions():
    d = pendulum_ocp().dims
    assert (d.N, d.nx, d.nu, d.n_theta) == (50, 4, 1, 1)


def test_random_ocp_is_seeded():
    a, ta = random_ocp(7)
    b, tb = random_ocp(7)
    np.testing.assert_array_equal(ta, tb)
    ra = solve_nlp(a, ta, None, SqpSettings())
    rb = solve_nlp(b, tb, None, SqpSettings())
    np.testing.assert_array_equal(ra.w.flat(), rb.w.flat())
