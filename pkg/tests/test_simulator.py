import csv
import dataclasses

import numpy as np
import pytest

from daecbf.benchmarks import get_preset
from daecbf.benchmarks.manipulator import mechanical_energy
from daecbf.errors import NoConvergence
from daecbf.simulator import InfeasiblePolicy, Mode, Scenario, consistent_init, run, step


def test_consistent_init_wind(wind):
    x = consistent_init(wind.system, wind.x_d0, wind.x_a_guess)
    np.testing.assert_array_equal(x[:2], wind.x_d0)
    assert abs(float(wind.system.phi(x)[0])) <= 1e-12


def test_consistent_init_manipulator(manip):
    x = consistent_init(manip.system, (0.3, 0.4, 0.0, 0.0), (0.0,))
    assert x[4] == pytest.approx(np.sin(0.3) + np.sin(0.7), abs=1e-12)


def test_consistent_init_no_root(wind):
    # far from the guess with only five Newton iterations allowed
    with pytest.raises(NoConvergence):
        consistent_init(wind.system, (0.0, -50.0), (1.5,), max_iter=5)


def test_energy_conserved_without_damping_or_input():
    preset = get_preset("manipulator", {"d1": 0.0, "d2": 0.0})
    scenario = dataclasses.replace(
        preset.scenario("nominal", horizon=1.0), nominal=lambda x: np.zeros(2)
    )
    traj = run(scenario, preset.projected())
    e = np.array([mechanical_energy(preset.params, x) for x in traj.x])
    assert np.max(np.abs(e - e[0])) <= 1e-8 * max(1.0, abs(e[0]))
    assert traj.summary["max_phi_res"] <= 1e-12


def test_composition_of_runs(wind, wind_pd):
    full = run(wind.scenario("nominal", dt=0.01, horizon=1.0), wind_pd)
    half = run(wind.scenario("nominal", dt=0.01, horizon=0.5), wind_pd)
    rest = run(
        dataclasses.replace(wind.scenario("nominal", dt=0.01, horizon=0.5), x_d0=tuple(half.x[-1, :2])),
        wind_pd,
    )
    np.testing.assert_allclose(rest.x[-1], full.x[-1], rtol=1e-12, atol=1e-12)


def test_single_step_matches_run(wind, wind_pd):
    traj = run(wind.scenario("nominal", dt=0.01, horizon=0.01), wind_pd)
    x_next, u, status = step(
        wind_pd, lambda x: (wind.nominal(x), "Nominal"), traj.x[0], 0.01
    )
    np.testing.assert_allclose(x_next, traj.x[1], atol=1e-14)
    assert status == "Nominal"


def test_halt_policy_stops_at_first_infeasible(wind):
    traj = run(wind.scenario("unaware", dt=0.01, policy=InfeasiblePolicy.HALT))
    s = traj.summary
    assert s["halted"] and s["infeasible_steps"] == 1
    assert traj.status[-1] == "Infeasible"
    assert traj.t[-1] == pytest.approx(s["first_infeasible_time"])


def test_hold_zero_policy_applies_zero(wind):
    traj = run(wind.scenario("unaware", dt=0.01, policy="hold_zero"))
    idx = [i for i, st in enumerate(traj.status) if st == "Infeasible"]
    assert idx and np.all(traj.u[idx] == 0.0)


def test_aware_requires_projected_dynamics(wind):
    with pytest.raises(ValueError):
        run(wind.scenario("aware"))


def test_scenario_validation(wind):
    with pytest.raises(ValueError):
        wind.scenario(dt=0.0)
    with pytest.raises(ValueError):
        wind.scenario(dt=0.1, horizon=0.05)
    with pytest.raises(ValueError):
        wind.scenario(mode="bogus")
    assert wind.scenario("nominal", dt=0.01, horizon=1.0).n_steps == 100


def test_csv_header_and_rows(wind, wind_pd, tmp_path):
    traj = run(wind.scenario("aware", dt=0.01, horizon=0.05), wind_pd)
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "x3", "u1", "b", "h", "phi_res", "status"]
    assert len(rows) == 7
    assert float(rows[1][1]) == traj.x[0, 0]
    assert rows[1][-1] == "Optimal"


def test_csv_is_deterministic(wind, wind_pd, tmp_path):
    for name in ("a.csv", "b.csv"):
        run(wind.scenario("aware", dt=0.01, horizon=0.2), wind_pd).write_csv(tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_mode_enum_values():
    assert [m.value for m in Mode] == ["aware", "unaware", "nominal"]
    assert Scenario.__dataclass_fields__["policy"].default is InfeasiblePolicy.HOLD_NOMINAL
