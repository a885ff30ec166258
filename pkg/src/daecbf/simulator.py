"""Closed-loop simulation of projected DAE dynamics with a safety filter."""

from __future__ import annotations

import csv
import logging
import weakref
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from daecbf.dae import DaeSystem
from daecbf.errors import NoConvergence
from daecbf.filter import Status, aware_filter, dae_unaware_filter
from daecbf.numeric import newton_root, pseudoinverse
from daecbf.projection import BarrierSpec, ProjectedDynamics

log = logging.getLogger(__name__)

PROJECTION_TOL = 1e-12
POST_STEP_TOL = 1e-9
NEWTON_ITERS = 30


class Mode(str, Enum):
    AWARE = "aware"
    UNAWARE = "unaware"
    NOMINAL = "nominal"


class InfeasiblePolicy(str, Enum):
    HOLD_NOMINAL = "hold_nominal"
    HOLD_ZERO = "hold_zero"
    HALT = "halt"


@dataclass(frozen=True)
class Scenario:
    system: DaeSystem
    spec: BarrierSpec
    mode: Mode
    x_d0: tuple
    dt: float
    horizon: float
    nominal: Callable
    policy: InfeasiblePolicy = InfeasiblePolicy.HOLD_NOMINAL
    x_a_guess: tuple | None = None
    unaware_spec: BarrierSpec | None = None
    name: str = "scenario"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be at least one step")
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "policy", InfeasiblePolicy(self.policy))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    b: np.ndarray
    h: np.ndarray
    phi_res: np.ndarray
    status: list
    halted: bool = False
    summary: dict = field(default_factory=dict)

    def summarize(self):
        infeasible = [i for i, s in enumerate(self.status) if s == Status.INFEASIBLE.value]
        first = float(self.t[infeasible[0]]) if infeasible else None
        self.summary = {
            "steps": int(self.t.size),
            "b0": float(self.b[0]),
            "min_b": float(np.min(self.b)),
            "min_h": float(np.min(self.h)),
            "max_phi_res": float(np.max(self.phi_res)),
            "first_infeasible_time": first,
            "infeasible_steps": len(infeasible),
            "min_h_after_infeasible": (
                float(np.min(self.h[infeasible[0]:])) if infeasible else None
            ),
            "halted": self.halted,
        }
        return self.summary

    def write_csv(self, path):
        n_x, n_u = self.x.shape[1], self.u.shape[1]
        header = (
            ["t"]
            + [f"x{i + 1}" for i in range(n_x)]
            + [f"u{i + 1}" for i in range(n_u)]
            + ["b", "h", "phi_res", "status"]
        )
        fmt = "%.17g"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(self.t.size):
                nums = [self.t[k], *self.x[k], *self.u[k], self.b[k], self.h[k], self.phi_res[k]]
                writer.writerow([fmt % v for v in nums] + [self.status[k]])


# ---------------------------------------------------------------------------
# Compiled integrator pieces
# ---------------------------------------------------------------------------


def _reproject_fn(sys: DaeSystem):
    """x -> x with x_a re-solved by Newton on phi(x_d, x_a) = 0 (x_d held)."""
    n_d = sys.n_d

    def residual(xa, xd):
        return sys.phi(jnp.concatenate([xd, xa]))

    def body(state):
        xa, xd, k, _ = state
        r = residual(xa, xd)
        jac = jax.jacfwd(residual)(xa, xd)
        xa = xa - pseudoinverse(jac) @ r
        return xa, xd, k + 1, jnp.max(jnp.abs(residual(xa, xd)))

    def cond(state):
        _, _, k, res = state
        return (k < NEWTON_ITERS) & (res > PROJECTION_TOL)

    def reproject(x):
        xd, xa = x[:n_d], x[n_d:]
        res0 = jnp.max(jnp.abs(residual(xa, xd)))
        xa, _, _, res = jax.lax.while_loop(cond, body, (xa, xd, 0, res0))
        return jnp.concatenate([xd, xa]), res

    return reproject


def _aware_step_fn(pd: ProjectedDynamics):
    f_hat, g_hat = pd.f_hat_fn, pd.g_hat_fn
    reproject = _reproject_fn(pd.system)

    def rhs(x, u):
        return f_hat(x) + g_hat(x) @ u

    def step(x, u, dt):
        k1 = rhs(x, u)
        k2 = rhs(x + 0.5 * dt * k1, u)
        k3 = rhs(x + 0.5 * dt * k2, u)
        k4 = rhs(x + dt * k3, u)
        return reproject(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))

    return step


def _unaware_step_fn(sys: DaeSystem):
    """RK4 on the raw differential equations; x_a follows by re-solving phi."""
    reproject = _reproject_fn(sys)
    n_d = sys.n_d

    def rhs(x, u):
        gd = jnp.reshape(sys.g_d(x), (n_d, sys.n_u))
        return sys.f_d(x) + gd @ u

    def at(x, xd):
        return reproject(jnp.concatenate([xd, x[n_d:]]))[0]

    def step(x, u, dt):
        xd = x[:n_d]
        k1 = rhs(x, u)
        k2 = rhs(at(x, xd + 0.5 * dt * k1), u)
        k3 = rhs(at(x, xd + 0.5 * dt * k2), u)
        k4 = rhs(at(x, xd + dt * k3), u)
        xd_next = xd + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return reproject(jnp.concatenate([xd_next, x[n_d:]]))

    return step


_STEP_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _cached(owner, key, build):
    per_owner = _STEP_CACHE.setdefault(owner, {})
    fn = per_owner.get(key)
    if fn is None:
        fn = build()
        per_owner[key] = fn
    return fn


def _monitored(stepper, sys: DaeSystem, spec: BarrierSpec):
    """Step followed by (b, h, |phi|) at the new state, compiled together."""

    def monitor(z):
        return jnp.stack(
            [
                jnp.reshape(spec.b(z), ()),
                jnp.reshape(spec.h(z), ()),
                jnp.max(jnp.abs(sys.phi(z))),
            ]
        )

    def step(x, u, dt):
        x_next, res = stepper(x, u, dt)
        return x_next, res, monitor(x_next)

    return jax.jit(step), jax.jit(monitor)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def consistent_init(sys: DaeSystem, x_d0, x_a_guess, tol: float = 1e-12, max_iter: int = 50):
    """Solve phi^(k)(x_d0, x_a) = 0 for k < nu in x_a, keeping x_d0 fixed."""
    x_d0 = np.asarray(x_d0, dtype=float).reshape(sys.n_d)
    guess = np.asarray(x_a_guess, dtype=float).reshape(sys.n_a)
    fns = [sys.level(k) for k in range(sys.declared_index)]

    def residual(xa):
        x = jnp.concatenate([jnp.asarray(x_d0), jnp.atleast_1d(xa)])
        return jnp.concatenate([f(x) for f in fns])

    res_jit = jax.jit(residual)
    jac_jit = jax.jit(jax.jacfwd(residual))
    xa = newton_root(res_jit, guess, tol=tol, max_iter=max_iter, jac=jac_jit)
    return np.concatenate([x_d0, xa])


def step(pd: ProjectedDynamics, controller: Callable, x, dt: float):
    """One RK4 step of the projected dynamics under ``controller``.

    ``controller(x)`` returns ``(u, status)``.  Raises NoConvergence when the
    post-step re-projection cannot bring |phi| under 1e-9.
    """
    u, status = controller(np.asarray(x, dtype=float))
    stepper = _cached(pd, "aware", lambda: jax.jit(_aware_step_fn(pd)))
    x_next, res = stepper(np.asarray(x, dtype=float), np.asarray(u, dtype=float), dt)
    res = float(res)
    if not res <= POST_STEP_TOL:
        raise NoConvergence("post-step projection failed", np.asarray(x_next), res)
    return np.asarray(x_next), np.asarray(u, dtype=float), status


def _make_controller(scenario: Scenario, pd: ProjectedDynamics | None):
    sys = scenario.system
    nominal = scenario.nominal
    if scenario.mode is Mode.NOMINAL:
        return lambda x: (np.asarray(nominal(x), dtype=float), "Nominal")
    unaware_spec = scenario.unaware_spec or BarrierSpec(
        b=scenario.spec.h, h=scenario.spec.h, hocbf_order=1, alphas=scenario.spec.alphas[:1]
    )

    def controller(x):
        u_nom = np.asarray(nominal(x), dtype=float)
        if scenario.mode is Mode.AWARE:
            res = aware_filter(pd, scenario.spec, x, u_nom)
        else:
            res = dae_unaware_filter(sys, unaware_spec, x, u_nom)
        if res.optimal:
            return res.u, res.status.value
        if scenario.policy is InfeasiblePolicy.HOLD_ZERO:
            return np.zeros(sys.n_u), res.status.value
        return u_nom, res.status.value

    return controller


def run(scenario: Scenario, pd: ProjectedDynamics | None = None) -> Trajectory:
    sys = scenario.system
    if scenario.mode is Mode.AWARE and pd is None:
        raise ValueError("aware mode needs ProjectedDynamics")
    guess = scenario.x_a_guess if scenario.x_a_guess is not None else np.zeros(sys.n_a)
    x = consistent_init(sys, scenario.x_d0, guess)
    controller = _make_controller(scenario, pd)
    spec = scenario.spec
    if scenario.mode is Mode.UNAWARE:
        owner, build = sys, lambda: _unaware_step_fn(sys)
    else:
        if pd is None:
            pd = ProjectedDynamics(sys, analysis=None, probes=[x])
        owner, build = pd, lambda: _aware_step_fn(pd)
    stepper, monitor = _cached(
        owner, (scenario.mode.value, spec), lambda: _monitored(build(), sys, spec)
    )

    n = scenario.n_steps
    dt = scenario.dt
    xs = np.zeros((n + 1, sys.n_x))
    us = np.zeros((n + 1, sys.n_u))
    bs, hs, phis = np.zeros(n + 1), np.zeros(n + 1), np.zeros(n + 1)
    status = []
    halted = False
    last = n
    mon = np.asarray(monitor(x))
    for k in range(n + 1):
        u, st = controller(x)
        xs[k], us[k] = x, u
        bs[k], hs[k], phis[k] = mon
        status.append(st)
        if st == Status.INFEASIBLE.value and scenario.policy is InfeasiblePolicy.HALT:
            log.info("halting at t=%.4f after infeasible QP", k * dt)
            halted, last = True, k
            break
        if k == n:
            break
        x_next, res, mon = stepper(x, np.asarray(u, dtype=float), dt)
        res = float(res)
        if not res <= POST_STEP_TOL:
            raise NoConvergence(f"re-projection failed at t={k * dt:.4f}", np.asarray(x_next), res)
        x, mon = np.asarray(x_next), np.asarray(mon)
    sl = slice(0, last + 1)
    traj = Trajectory(
        t=np.arange(last + 1) * dt,
        x=xs[sl],
        u=us[sl],
        b=bs[sl],
        h=hs[sl],
        phi_res=phis[sl],
        status=status,
        halted=halted,
    )
    traj.summarize()
    return traj
