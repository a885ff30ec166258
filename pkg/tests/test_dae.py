import jax.numpy as jnp
import numpy as np
import pytest
from toys import double_integrator, mirror

from daecbf.benchmarks.wind_turbine import manifold_x2
from daecbf.dae import (
    DaeSystem,
    IndexAnalysis,
    analyze_index,
    check_regularity,
    constraint_jacobians,
    control_influence,
    eta_matrix,
)
from daecbf.errors import InconsistentIndex, NonFinite


def _wind_point(p, x1=0.7, x3=1.3):
    return np.array([x1, manifold_x2(p, x3), x3])


def test_wind_jacobians_match_hand_formulas(wind):
    p = wind.params
    x = _wind_point(p)
    x2, x3 = x[1], x[2]
    b2, b3 = p["beta2"], p["beta3"]
    j_d, j_a = constraint_jacobians(wind.system, x, 1)
    np.testing.assert_allclose(j_d, [[0.0, -b3 * x3**3]], rtol=1e-13)
    expected = 4 * x3**3 - 2 * b2 * x3 - 3 * b3 * x2 * x3**2 + 4 * b3 * x3**3
    np.testing.assert_allclose(j_a, [[expected]], rtol=1e-13)


def test_manipulator_algebraic_jacobian(manip, rng):
    for _ in range(10):
        x = rng.uniform(-2, 2, size=5)
        for level in (0, 1, 2):
            _, j_a = constraint_jacobians(manip.system, x, level)
            np.testing.assert_array_equal(j_a, [[-1.0]])


def test_constraint_jacobians_rejects_bad_level_and_nan(wind):
    with pytest.raises(ValueError):
        constraint_jacobians(wind.system, np.zeros(3), 2)
    with pytest.raises(NonFinite):
        constraint_jacobians(wind.system, np.array([0.0, np.nan, 1.0]), 1)


def test_eta_first_order_is_jd():
    j_d = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(eta_matrix(j_d, np.array([3.0, 4.0]), 1), j_d)


def test_eta_zero_drift_vanishes_above_first_order():
    j_d = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(eta_matrix(j_d, np.zeros(2), 2), np.zeros((1, 2)))


def test_eta_second_order_scales_by_drift():
    j_d = np.array([[1.0, -2.0]])
    # J_d f_d = 1*3 - 2*4 = -5
    np.testing.assert_allclose(eta_matrix(j_d, np.array([3.0, 4.0]), 2), -5.0 * j_d)


def test_control_influence_validates_order():
    with pytest.raises(ValueError):
        control_influence(mirror(), np.zeros(2), 1, 0)


@pytest.mark.parametrize(
    "factory, triple",
    [(mirror, (1, 1, 1)), (double_integrator, (1, 2, 2))],
)
def test_toy_index_triples(factory, triple, rng):
    probes = rng.normal(size=(8, 3 if factory is double_integrator else 2))
    res = analyze_index(factory(), probes)
    assert (res.nu, res.d_prime, res.d) == triple
    assert res.regular and res.j_a_rank == 1


def test_benchmark_index_triples(wind, manip):
    w = analyze_index(wind.system, wind.probes)
    m = analyze_index(manip.system, manip.probes)
    assert (w.nu, w.d_prime, w.d) == (1, 2, 2)
    assert (m.nu, m.d_prime, m.d) == (2, 2, 3)


def test_check_regularity_on_benchmarks(wind, manip):
    assert check_regularity(wind.system, wind.probes) == (True, ())
    assert check_regularity(manip.system, manip.probes) == (True, ())


def test_rank_deficient_algebraic_jacobian_is_inconsistent():
    sys = DaeSystem(
        n_d=1,
        n_a=1,
        n_u=1,
        f_d=lambda x: jnp.zeros(1),
        g_d=lambda x: jnp.ones((1, 1)),
        constraint_chain=(lambda x: x[1] ** 2 - x[0],) * 2,
        declared_index=1,
    )
    with pytest.raises(InconsistentIndex):
        analyze_index(sys, np.array([[0.0, 0.0], [1.0, 0.0]]))


def test_input_never_reaches_constraint():
    sys = DaeSystem(
        n_d=2,
        n_a=1,
        n_u=1,
        f_d=lambda x: jnp.zeros(2),
        g_d=lambda x: jnp.array([[0.0], [1.0]]),
        constraint_chain=(lambda x: x[2] - x[0],) * 2,
        declared_index=1,
    )
    with pytest.raises(InconsistentIndex):
        analyze_index(sys, np.ones((4, 3)))


def test_system_validation():
    with pytest.raises(ValueError):
        DaeSystem(1, 1, 1, None, None, (None,), declared_index=1)
    with pytest.raises(ValueError):
        DaeSystem(1, 1, 1, None, None, (None, None), declared_index=1, input_polytope=(np.eye(2), np.ones(2)))
    with pytest.raises(ValueError):
        IndexAnalysis(nu=1, d_prime=2, d=1, j_a_rank=1, regular=True)


def test_input_bounds_default_empty():
    a_u, r_u = mirror().input_bounds()
    assert a_u.shape == (0, 1) and r_u.shape == (0,)
