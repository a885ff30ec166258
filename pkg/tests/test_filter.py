import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dual_projected_gradient_qp
from toys import double_integrator, mirror, stalled_chain

from daecbf.errors import OffManifold, StructuralInfeasibility
from daecbf.filter import (
    QpProblem,
    Status,
    assemble_compatibility,
    assemble_filter_qp,
    aware_filter,
    dae_unaware_filter,
    solve_qp,
)
from daecbf.projection import BarrierSpec, ProjectedDynamics
from daecbf.simulator import run


def _projection_qp(u0, a_mat, r_vec, e_mat=None, e_vec=None):
    n = len(u0)
    eq = (np.zeros((0, n)), np.zeros(0)) if e_mat is None else (e_mat, e_vec)
    return QpProblem(np.eye(n), -np.asarray(u0, dtype=float), eq, (a_mat, r_vec))


def test_scalar_active_bound():
    res = solve_qp(_projection_qp([3.0], np.array([[1.0]]), np.array([1.0])))
    assert res.status is Status.OPTIMAL
    np.testing.assert_allclose(res.u, [1.0])
    assert res.active_set == (0,)
    np.testing.assert_allclose(res.multipliers, [2.0])


def test_scalar_inactive_bound():
    res = solve_qp(_projection_qp([0.5], np.array([[1.0]]), np.array([1.0])))
    np.testing.assert_allclose(res.u, [0.5])
    assert res.active_set == ()


def test_equality_projection():
    qp = _projection_qp([2.0, 0.0], np.zeros((0, 2)), np.zeros(0), np.array([[1.0, 1.0]]), np.array([1.0]))
    res = solve_qp(qp)
    # u = u0 - (sum(u0) - 1)/2 * (1, 1)
    np.testing.assert_allclose(res.u, [1.5, -0.5])


def test_infeasible_returns_certificate():
    qp = _projection_qp([0.0], np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))
    res = solve_qp(qp)
    assert res.status is Status.INFEASIBLE and res.u is None
    assert res.certificate.check(*qp.stacked_inequalities())


def test_qp_validation():
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(3), (np.zeros((0, 3)), np.zeros(0)), (np.zeros((0, 3)), np.zeros(0)))
    with pytest.raises(ValueError):
        QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2), (np.zeros((0, 2)), np.zeros(0)), (np.zeros((0, 2)), np.zeros(0)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_random_qps_match_dual_gradient(n, m, seed):
    rng = np.random.default_rng(seed)
    a_mat = rng.normal(size=(m, n))
    r_vec = a_mat @ rng.normal(size=n) + rng.exponential(size=m)
    u0 = 3.0 * rng.normal(size=n)
    res = solve_qp(_projection_qp(u0, a_mat, r_vec))
    assert res.optimal
    assert np.max(a_mat @ res.u - r_vec) <= 1e-9
    ref = dual_projected_gradient_qp(u0, a_mat, r_vec)
    # the reference is a feasible-ish iterate; compare objective and point
    assert np.linalg.norm(res.u - u0) <= np.linalg.norm(ref - u0) + 1e-6
    np.testing.assert_allclose(res.u, ref, atol=1e-5)


def test_kkt_conditions_random(rng):
    for _ in range(200):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 7))
        a_mat = rng.normal(size=(m, n))
        r_vec = a_mat @ rng.normal(size=n) + rng.exponential(size=m)
        u0 = rng.normal(size=n)
        res = solve_qp(_projection_qp(u0, a_mat, r_vec))
        mu = res.multipliers
        assert np.all(mu >= -1e-10)
        np.testing.assert_allclose(res.u - u0 + a_mat.T @ mu, 0.0, atol=1e-9)
        assert np.max(np.abs(mu * (a_mat @ res.u - r_vec))) <= 1e-9


def test_empty_compatibility_for_index_one_full_rank():
    pd = ProjectedDynamics(mirror(), probes=np.zeros((1, 2)))
    e_mat, e_vec = assemble_compatibility(pd, np.array([0.2, 0.2]))
    assert e_mat.shape == (0, 1) and e_vec.shape == (0,)


def test_structural_infeasibility():
    sys, analysis = stalled_chain()
    pd = ProjectedDynamics(sys, analysis=analysis)
    with pytest.raises(StructuralInfeasibility):
        assemble_compatibility(pd, np.array([0.0, 1.0, 0.0]))
    e_mat, _ = assemble_compatibility(pd, np.array([0.0, 0.0, 0.0]))
    assert e_mat.shape[0] == 0


def test_aware_filter_double_integrator_clips():
    pd = ProjectedDynamics(double_integrator(bounds=5.0), probes=np.ones((2, 3)))
    spec = BarrierSpec(b=lambda z: z[0], h=lambda z: z[0], hocbf_order=2, alphas=(1.0,))
    # at p = 1, v = -2: row u >= -(v) - (v + p) = 3
    res = aware_filter(pd, spec, np.array([1.0, -2.0, 1.0]), np.array([0.0]))
    np.testing.assert_allclose(res.u, [3.0], atol=1e-12)
    assert res.active_set == (0,)
    x = np.array([1.0, -5.0, 1.0])
    res = aware_filter(pd, spec, x, np.array([0.0]))
    # needs u >= 9 but |u| <= 5
    assert res.status is Status.INFEASIBLE
    qp = assemble_filter_qp(pd, spec, x, np.array([0.0]))
    np.testing.assert_allclose(qp.ineq_rows[1], [-9.0, 5.0, 5.0])
    assert res.certificate.check(*qp.stacked_inequalities())


def test_assemble_rejects_off_manifold(wind, wind_pd):
    with pytest.raises(OffManifold):
        assemble_filter_qp(wind_pd, wind.spec, np.array([0.0, 1.0, 1.0]), [0.0])


def test_wind_contrast_state(wind, wind_pd):
    traj = run(wind.scenario("unaware", dt=0.01))
    i = traj.status.index(Status.INFEASIBLE.value)
    x = traj.x[i]
    unaware = dae_unaware_filter(wind.system, wind.unaware_spec, x, wind.nominal(x))
    assert unaware.status is Status.INFEASIBLE
    assert unaware.certificate.value == pytest.approx(-1.0, abs=1e-9)
    assert np.all(unaware.certificate.lam >= 0)
    aware = aware_filter(wind_pd, wind.spec, x, wind.nominal(x))
    assert aware.optimal
