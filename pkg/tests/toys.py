"""Tiny DAEs whose projected fields and Lie derivatives are known by hand."""

import jax.numpy as jnp
import numpy as np

from daecbf.dae import DaeSystem, IndexAnalysis


def mirror():
    """x1' = u, 0 = x2 - x1.  f_hat = (0, 0), g_hat = (1, 1); index 1, d' = 1."""
    return DaeSystem(
        n_d=1,
        n_a=1,
        n_u=1,
        f_d=lambda x: jnp.zeros(1),
        g_d=lambda x: jnp.ones((1, 1)),
        constraint_chain=(lambda x: x[1] - x[0],) * 2,
        declared_index=1,
    )


def double_integrator(bounds=None):
    """p' = v, v' = u, 0 = z - p.  f_hat = (v, 0, v), g_hat = (0, 1, 0); d' = 2."""
    polytope = None
    if bounds is not None:
        polytope = (np.array([[1.0], [-1.0]]), np.array([bounds, bounds]))
    return DaeSystem(
        n_d=2,
        n_a=1,
        n_u=1,
        f_d=lambda x: jnp.array([x[1], 0.0]),
        g_d=lambda x: jnp.array([[0.0], [1.0]]),
        constraint_chain=(lambda x: x[2] - x[0],) * 2,
        declared_index=1,
        input_polytope=polytope,
    )


def stalled_chain():
    """Index-2 chain whose first level has no algebraic dependence.

    Level 1 is x1 (J_a = 0, so P1 = 1); level 2 is z - x1 (P2 = 0).  The
    level-1 compatibility row reads 0 u = -x2, so any x2 != 0 is
    structurally infeasible.
    """
    sys = DaeSystem(
        n_d=2,
        n_a=1,
        n_u=1,
        f_d=lambda x: jnp.array([x[1], 0.0]),
        g_d=lambda x: jnp.array([[0.0], [1.0]]),
        constraint_chain=(lambda x: x[2] - x[0], lambda x: x[0], lambda x: x[2] - x[0]),
        declared_index=2,
    )
    return sys, IndexAnalysis(nu=2, d_prime=1, d=2, j_a_rank=1, regular=True)
