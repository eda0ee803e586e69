import numpy as np
import pytest

from diffocp.batch import BatchInstance, BatchRequest, SensitivityRequest, batch_run, run_instance
from diffocp.problems import generate_lqr_bench
from diffocp.sensitivity import AdjointSeed, forward, setup_and_factorize
from diffocp.sqp import SqpSettings, solve_nlp


@pytest.fixture(scope="module")
def bench():
    return generate_lqr_bench(nx=3, nu=2, N=6, u_max=0.5, n_batch=6)


def _request(bench, kind="forward", workers=1, instances=None):
    if instances is None:
        seed = AdjointSeed.on_control(bench.ocp.dims)
        instances = [BatchInstance(bench.theta, x0, seed=seed) for x0 in bench.x0s]
    return BatchRequest(bench.ocp, instances, SqpSettings(tol=1e-10), SensitivityRequest(kind), workers)


def test_single_instance_matches_direct_call(bench):
    out = batch_run(_request(bench, instances=[BatchInstance(bench.theta, bench.x0s[2])]))
    ocp = bench.instance_ocp(2)
    res = solve_nlp(ocp, bench.theta, None, SqpSettings(tol=1e-10))
    ref = forward(setup_and_factorize(ocp, res)).columns
    assert out.converged == 1
    np.testing.assert_array_equal(out.results[0].solve.w.flat(), res.w.flat())
    np.testing.assert_array_equal(out.results[0].forward.columns, ref)


def test_failure_stays_in_its_slot(bench):
    bad = bench.theta.copy()
    bad[0] = np.nan
    insts = [BatchInstance(bench.theta, bench.x0s[0]), BatchInstance(bad, bench.x0s[1]),
             BatchInstance(bench.theta, bench.x0s[2])]
    out = batch_run(_request(bench, instances=insts))
    assert [r.ok for r in out.results] == [True, False, True]
    assert out.results[1].error
    assert out.converged == 2


@pytest.mark.parametrize("workers", [4, 8])
def test_worker_count_does_not_change_results(bench, workers):
    one = batch_run(_request(bench, "adjoint", 1))
    many = batch_run(_request(bench, "adjoint", workers))
    for a, b in zip(one.results, many.results):
        assert a.solve.status is b.solve.status
        np.testing.assert_array_equal(a.solve.w.flat(), b.solve.w.flat())
        np.testing.assert_array_equal(a.adjoint.s_adj, b.adjoint.s_adj)
    assert one.total_sqp_iterations == many.total_sqp_iterations
    assert one.total_ipm_iterations == many.total_ipm_iterations


def test_adjoint_matches_forward_contraction(bench):
    fwd = batch_run(_request(bench, "forward"))
    adj = batch_run(_request(bench, "adjoint"))
    row = bench.ocp.dims.u_index(0).start
    for f, a in zip(fwd.results, adj.results):
        ref = f.forward.columns[row]
        assert np.abs(a.adjoint.s_adj - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())


def test_request_validation(bench):
    with pytest.raises(ValueError):
        _request(bench, workers=0)
    with pytest.raises(ValueError):
        _request(bench, instances=[BatchInstance(bench.theta[:-1])])
    with pytest.raises(ValueError):
        _request(bench, instances=[BatchInstance(bench.theta, np.zeros(2))])
    with pytest.raises(ValueError):
        _request(bench, "adjoint", instances=[BatchInstance(bench.theta)])
    with pytest.raises(ValueError):
        SensitivityRequest("reverse")


def test_run_instance_reports_unconverged(bench):
    out = run_instance(bench.ocp, BatchInstance(bench.theta, bench.x0s[0]), SqpSettings(max_iter=1, tol=1e-14),
                       SensitivityRequest("forward"))
    assert not out.ok
    assert out.forward is None
    assert "MaxIter" in out.error or "solve ended" in out.error
