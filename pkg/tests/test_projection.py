import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from toys import double_integrator, mirror, stalled_chain

from daecbf.dae import IndexAnalysis
from daecbf.errors import DegenerateRow, OffManifold
from daecbf.projection import (
    BarrierSpec,
    ProjectedDynamics,
    hocbf_terms,
    lie_chain,
    projected_fields,
    projection_operator,
)

_DI_ANALYSIS = IndexAnalysis(nu=1, d_prime=2, d=2, j_a_rank=1, regular=True)


@pytest.fixture(scope="module")
def mirror_pd():
    return ProjectedDynamics(mirror(), probes=np.array([[0.0, 0.0], [1.0, 1.0]]))


@pytest.fixture(scope="module")
def di_pd():
    return ProjectedDynamics(double_integrator(), probes=np.random.default_rng(1).normal(size=(6, 3)))


def test_mirror_fields(mirror_pd):
    f, g = projected_fields(mirror_pd, np.array([0.4, 0.4]))
    np.testing.assert_array_equal(f, [0.0, 0.0])
    np.testing.assert_array_equal(g, [[1.0], [1.0]])


def test_full_rank_projector_is_zero(mirror_pd):
    np.testing.assert_array_equal(projection_operator(mirror_pd, np.array([0.4, 0.4]), 1), [[0.0]])


def test_rank_deficient_projector_is_identity():
    sys, analysis = stalled_chain()
    pd = ProjectedDynamics(sys, analysis=analysis)
    x = np.array([0.3, 0.0, 0.3])
    np.testing.assert_allclose(projection_operator(pd, x, 1), [[1.0]])
    np.testing.assert_allclose(projection_operator(pd, x, 2), [[0.0]])
    with pytest.raises(ValueError):
        projection_operator(pd, x, 3)


def test_projector_algebra_at_random_wind_points(wind, wind_pd, rng):
    from daecbf.benchmarks.wind_turbine import manifold_x2

    for x3 in rng.uniform(0.6, 3.2, size=20):
        x = np.array([rng.uniform(-1, 4), manifold_x2(wind.params, x3), x3])
        p = wind_pd.projectors(x)[0]
        assert np.linalg.norm(p @ p - p) <= 1e-12
        assert np.linalg.norm(p - p.T) <= 1e-12


def test_double_integrator_fields(di_pd):
    f, g = di_pd.fields(np.array([1.0, 2.5, 1.0]))
    np.testing.assert_allclose(f, [2.5, 0.0, 2.5])
    np.testing.assert_allclose(g, [[0.0], [1.0], [0.0]])


def test_lie_chain_double_integrator(di_pd):
    x = np.array([1.5, -0.5, 1.5])
    # psi = p^2: L_f psi = 2 p v, L_f^2 psi = 2 v^2, L_g L_f psi = 2 p, L_g psi = 0
    lf, lg = lie_chain(di_pd, lambda z: z[0] ** 2, x, 1)
    assert lf == pytest.approx(2 * 1.5 * -0.5)
    np.testing.assert_allclose(lg, [0.0], atol=1e-15)
    lf2, lg2 = lie_chain(di_pd, lambda z: z[0] ** 2, x, 2)
    assert lf2 == pytest.approx(2 * 0.25)
    np.testing.assert_allclose(lg2, [3.0])


def test_lie_chain_rejects_order_zero(di_pd):
    with pytest.raises(ValueError):
        lie_chain(di_pd, lambda z: z[0], np.zeros(3), 0)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.floats(0.1, 5),
)
def test_hocbf_second_order_double_integrator(p, v, kappa):
    pd = ProjectedDynamics(double_integrator(), analysis=_DI_ANALYSIS)
    spec = BarrierSpec(b=lambda z: z[0], h=lambda z: z[0], hocbf_order=2, alphas=(kappa,))
    psis, a_row, c = hocbf_terms(pd, spec, np.array([p, v, p]))
    # psi1 = v + k p;  row: u + k v + k (v + k p) >= 0
    np.testing.assert_allclose(psis, [p, v + kappa * p], atol=1e-12)
    np.testing.assert_allclose(a_row, [1.0])
    assert c == pytest.approx(kappa * v + kappa * (v + kappa * p), abs=1e-12)


def test_hocbf_constant_barrier(mirror_pd):
    spec = BarrierSpec(b=lambda z: 2.0 + 0.0 * z[0], h=lambda z: z[0], alphas=(3.0,))
    psis, a_row, c = hocbf_terms(mirror_pd, spec, np.array([0.1, 0.1]))
    assert psis == [2.0]
    np.testing.assert_array_equal(a_row, [0.0])
    assert c == pytest.approx(6.0)


def test_degenerate_row_on_boundary(mirror_pd):
    spec = BarrierSpec(b=lambda z: 0.0 * z[0], h=lambda z: z[0])
    with pytest.raises(DegenerateRow):
        hocbf_terms(mirror_pd, spec, np.array([0.1, 0.1]))


def test_off_manifold_is_rejected(mirror_pd):
    with pytest.raises(OffManifold):
        projected_fields(mirror_pd, np.array([0.0, 1.0]))


def test_barrier_spec_validation():
    with pytest.raises(ValueError):
        BarrierSpec(b=None, h=None, hocbf_order=0)
    with pytest.raises(ValueError):
        BarrierSpec(b=None, h=None, hocbf_order=2, alphas=(1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        BarrierSpec(b=None, h=None, alphas=(-1.0,))
    assert BarrierSpec(b=None, h=None, hocbf_order=3, alphas=(2.0,)).alphas == (2.0, 2.0, 2.0)


def test_projected_dynamics_needs_analysis_or_probes():
    with pytest.raises(ValueError):
        ProjectedDynamics(mirror())


def test_tangency_on_manipulator(manip, manip_pd, rng):
    import jax

    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, size=2)
        w = rng.uniform(-3, 3, size=2)
        y = np.sin(q[0]) + np.sin(q[0] + q[1])
        x = np.concatenate([q, w, [y]])
        jac = np.asarray(jax.jacfwd(manip.system.phi)(jnp.asarray(x)))
        f, g = manip_pd.fields(x)
        assert np.max(np.abs(jac @ f)) <= 1e-12
        assert np.max(np.abs(jac @ g)) <= 1e-12
