import jax.numpy as jnp
import numpy as np
import pytest

from daecbf.benchmarks import PRESET_NAMES, get_preset, load_params
from daecbf.benchmarks.manipulator import inertia, tip_height
from daecbf.benchmarks.wind_turbine import BARRIER_COEFFS, candidate_barrier, manifold_x2


def test_barrier_constant_term():
    assert float(candidate_barrier(jnp.zeros(3))) == pytest.approx(-1175.36)


def test_barrier_has_ten_coefficients():
    assert len(BARRIER_COEFFS) == 10


def test_barrier_offset_shifts(wind):
    x = jnp.array([0.5, 1.0, 1.5])
    assert float(candidate_barrier(x, 2.5)) == pytest.approx(float(candidate_barrier(x)) + 2.5)


def test_wind_manifold_parametrisation(wind):
    for x3 in np.linspace(0.5, 3.4, 12):
        x = jnp.array([0.0, manifold_x2(wind.params, x3), x3])
        assert abs(float(wind.system.phi(x)[0])) <= 1e-10 * max(1.0, x3**4)


def test_tip_height(manip):
    p = manip.params
    assert float(tip_height(p, jnp.array([np.pi / 2, 0.0]))) == pytest.approx(2.0)
    assert float(tip_height(p, jnp.array([0.0, 0.0]))) == pytest.approx(0.0)


def test_inertia_spd(manip):
    rng = np.random.default_rng(5)
    for q2 in rng.uniform(-np.pi, np.pi, size=1000):
        m = np.asarray(inertia(manip.params, q2))
        assert np.allclose(m, m.T)
        assert np.linalg.eigvalsh(m)[0] > 0


def test_manipulator_initial_barrier(manip):
    # starts at the zero configuration, so y = 0 and b = y_max
    x = np.concatenate([manip.x_d0, [0.0]])
    assert float(manip.spec.b(x)) == pytest.approx(manip.params["y_max"])


def test_unknown_override_rejected():
    with pytest.raises(KeyError):
        get_preset("wind_turbine", {"not_a_param": 1.0})


def test_override_applies():
    p = get_preset("wind_turbine", {"x_max": -2.0})
    assert p.params["x_max"] == -2.0
    assert float(p.spec.h(jnp.array([0.0, 1.0, 1.0]))) == pytest.approx(2.0)


def test_unknown_benchmark():
    with pytest.raises(KeyError):
        get_preset("pendulum")
    with pytest.raises(KeyError):
        load_params("pendulum")


def test_alias_and_names():
    assert get_preset("flexible_manipulator").name == "manipulator"
    assert PRESET_NAMES == ("wind_turbine", "manipulator")


def test_params_are_read_only(wind):
    with pytest.raises(TypeError):
        wind.params["x_max"] = 0.0


def test_box_and_probes_shapes(wind, manip):
    for p in (wind, manip):
        lo, hi = p.domain_box
        assert lo.shape == hi.shape == (p.system.n_x,)
        assert np.all(lo < hi)
        assert p.probes.shape[1] == p.system.n_x


def test_probes_lie_on_manifold(wind, manip):
    for p in (wind, manip):
        res = [abs(float(p.system.phi(jnp.asarray(x))[0])) for x in p.probes]
        assert max(res) <= 1e-10


def test_nominal_controller_saturates(manip):
    u = manip.nominal(np.array([3.0, 3.0, 4.0, 4.0, 0.0]))
    assert np.all(np.abs(u) <= manip.params["u_max"])
