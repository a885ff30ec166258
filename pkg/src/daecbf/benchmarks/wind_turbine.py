"""Index-1 wind-turbine DAE with a degree-2 polynomial barrier candidate.

    x1' = a1 (u - c1 x3 (x2 - x3))
    x2' = a2 (x1 - x3)
    0   = x3^4 - [c2 + c3 x3 (x2 - x3)] x3^2 + c4

``a*``/``c*`` correspond to the model's alpha/beta parameters, whose numeric
values are a calibrated choice stored in ``wind_turbine.json``.  The safety
function is h(x) = x1 - x_max; despite the name, x_max acts as a lower bound
on x1.
"""

from __future__ import annotations

import jax.numpy as jnp
import numpy as np

from daecbf.dae import DaeSystem
from daecbf.projection import BarrierSpec

# Coefficients of 1, x1, x2, x3, x1^2, x1 x2, x1 x3, x2^2, x2 x3, x3^2.
BARRIER_COEFFS = (
    -1175.36,
    238.42,
    1491.68,
    238.42,
    -263.78,
    472.45,
    -477.45,
    -145.97,
    -263.78,
    1.0,
)


def candidate_barrier(x, offset: float = 0.0):
    c = BARRIER_COEFFS
    x1, x2, x3 = x[0], x[1], x[2]
    return (
        c[0]
        + c[1] * x1
        + c[2] * x2
        + c[3] * x3
        + c[4] * x1**2
        + c[5] * x1 * x2
        + c[6] * x1 * x3
        + c[7] * x2**2
        + c[8] * x2 * x3
        + c[9] * x3**2
        + offset
    )


def manifold_x2(p, x3):
    """x2 on the manifold as an explicit function of x3 (x3 != 0)."""
    return x3 + (x3**4 - p["beta2"] * x3**2 + p["beta4"]) / (p["beta3"] * x3**3)


def build(p):
    a1, a2 = p["alpha1"], p["alpha2"]
    b1, b2, b3, b4 = p["beta1"], p["beta2"], p["beta3"], p["beta4"]

    def f_d(x):
        return jnp.array([-a1 * b1 * x[2] * (x[1] - x[2]), a2 * (x[0] - x[2])])

    def g_d(x):
        return jnp.array([[a1], [0.0]])

    def phi(x):
        x2, x3 = x[1], x[2]
        return jnp.atleast_1d(x3**4 - (b2 + b3 * x3 * (x2 - x3)) * x3**2 + b4)

    u_min, u_max = p["u_min"], p["u_max"]
    system = DaeSystem(
        n_d=2,
        n_a=1,
        n_u=1,
        f_d=f_d,
        g_d=g_d,
        constraint_chain=(phi, phi),
        declared_index=1,
        input_polytope=(np.array([[1.0], [-1.0]]), np.array([u_max, -u_min])),
        name="wind_turbine",
    )

    x_max = p["x_max"]
    offset = p.get("b_offset", 0.0)

    def h(x):
        return x[0] - x_max

    def b(x):
        return candidate_barrier(x, offset)

    spec = BarrierSpec(b=b, h=h, hocbf_order=1, alphas=(p["kappa"],))
    unaware = BarrierSpec(b=h, h=h, hocbf_order=1, alphas=(p["kappa"],))
    return system, spec, unaware


def nominal_controller(p):
    """Drift-cancelling proportional law pulling x1 towards x1_ref."""
    b1, kp, ref = p["beta1"], p["nominal_gain"], p["nominal_ref"]

    def u_nom(x):
        return np.array([b1 * x[2] * (x[1] - x[2]) - kp * (x[0] - ref)])

    return u_nom
