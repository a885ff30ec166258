"""Preset benchmark systems: the wind-turbine DAE and the two-link manipulator.

Each preset bundles the system, barrier specs, nominal controller, default
scenario settings, probe points, a verification box and the parameter
record it was built from.  Records live as JSON next to this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from daecbf.benchmarks import manipulator as _manip
from daecbf.benchmarks import wind_turbine as _wind
from daecbf.dae import DaeSystem
from daecbf.projection import BarrierSpec, ProjectedDynamics
from daecbf.simulator import InfeasiblePolicy, Mode, Scenario

PRESET_NAMES = ("wind_turbine", "manipulator")
_ALIASES = {"flexible_manipulator": "manipulator"}


@dataclass(frozen=True, eq=False)
class BenchmarkPreset:
    name: str
    system: DaeSystem
    spec: BarrierSpec
    unaware_spec: BarrierSpec
    nominal: Callable
    x_d0: tuple
    x_a_guess: tuple
    dt: float
    horizon: float
    box_lo: np.ndarray
    box_hi: np.ndarray
    probes: np.ndarray
    x_a_grid_guesses: int
    params: Mapping = field(default_factory=dict)

    def scenario(self, mode="aware", dt=None, horizon=None, policy=InfeasiblePolicy.HOLD_NOMINAL):
        return Scenario(
            system=self.system,
            spec=self.spec,
            mode=Mode(mode),
            x_d0=self.x_d0,
            dt=self.dt if dt is None else dt,
            horizon=self.horizon if horizon is None else horizon,
            nominal=self.nominal,
            policy=policy,
            x_a_guess=self.x_a_guess,
            unaware_spec=self.unaware_spec,
            name=f"{self.name}-{Mode(mode).value}",
        )

    def projected(self, rank_tol=None) -> ProjectedDynamics:
        """ProjectedDynamics over the preset probes (cached per rank_tol)."""
        cache = self.__dict__.setdefault("_pd_cache", {})
        pd = cache.get(rank_tol)
        if pd is None:
            kwargs = {} if rank_tol is None else {"rank_tol": rank_tol}
            pd = ProjectedDynamics(self.system, probes=self.probes, **kwargs)
            cache[rank_tol] = pd
        return pd

    @property
    def domain_box(self):
        return self.box_lo, self.box_hi


def load_params(name: str) -> dict:
    name = _ALIASES.get(name, name)
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown benchmark {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files(__name__).joinpath(f"{name}.json").read_text()
    return json.loads(text)


def _merge(base: dict, overrides: Mapping | None) -> dict:
    params = dict(base)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise KeyError(f"unknown parameter {key!r} for benchmark {params['name']!r}")
        params[key] = value
    return params


def _wind_probes(p):
    x3 = np.linspace(0.6, 3.2, 9)
    x2 = _wind.manifold_x2(p, x3)
    x1 = np.linspace(-1.0, 4.0, 9)
    return np.stack([x1, x2, x3], axis=1)


def _manip_probes(p):
    rng = np.random.default_rng(0)
    q = rng.uniform(-np.pi, np.pi, size=(16, 2))
    w = rng.uniform(-3.0, 3.0, size=(16, 2))
    y = p["l1"] * np.sin(q[:, 0]) + p["l2"] * np.sin(q[:, 0] + q[:, 1])
    return np.column_stack([q, w, y])


def wind_turbine(overrides: Mapping | None = None) -> BenchmarkPreset:
    p = _merge(load_params("wind_turbine"), overrides)
    system, spec, unaware = _wind.build(p)
    return BenchmarkPreset(
        name="wind_turbine",
        system=system,
        spec=spec,
        unaware_spec=unaware,
        nominal=_wind.nominal_controller(p),
        x_d0=tuple(p["x_d0"]),
        x_a_guess=tuple(p["x_a_guess"]),
        dt=float(p["dt"]),
        horizon=float(p["horizon"]),
        box_lo=np.asarray(p["box_lo"], dtype=float),
        box_hi=np.asarray(p["box_hi"], dtype=float),
        probes=_wind_probes(p),
        x_a_grid_guesses=int(p["x_a_grid_guesses"]),
        params=MappingProxyType(p),
    )


def flexible_manipulator(overrides: Mapping | None = None) -> BenchmarkPreset:
    p = _merge(load_params("manipulator"), overrides)
    system, spec, unaware = _manip.build(p)
    return BenchmarkPreset(
        name="manipulator",
        system=system,
        spec=spec,
        unaware_spec=unaware,
        nominal=_manip.nominal_controller(p),
        x_d0=tuple(p["theta0"]) + tuple(p["omega0"]),
        x_a_guess=(0.0,),
        dt=float(p["dt"]),
        horizon=float(p["horizon"]),
        box_lo=np.asarray(p["box_lo"], dtype=float),
        box_hi=np.asarray(p["box_hi"], dtype=float),
        probes=_manip_probes(p),
        x_a_grid_guesses=int(p["x_a_grid_guesses"]),
        params=MappingProxyType(p),
    )


def get_preset(name: str, overrides: Mapping | None = None) -> BenchmarkPreset:
    name = _ALIASES.get(name, name)
    if name == "wind_turbine":
        return wind_turbine(overrides)
    if name == "manipulator":
        return flexible_manipulator(overrides)
    raise KeyError(f"unknown benchmark {name!r}; choose from {', '.join(PRESET_NAMES)}")
