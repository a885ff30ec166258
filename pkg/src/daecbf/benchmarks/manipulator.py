"""Two-link planar manipulator with the end-effector height as algebraic state.

State x = (q1, q2, w1, w2, y) with q2 the elbow angle relative to link 1,
angles measured from the horizontal and y pointing up.  Rigid-body terms
follow the usual textbook form with I_i the link inertia about its centre
of mass:

    M11 = m1 lc1^2 + m2 (l1^2 + lc2^2 + 2 l1 lc2 cos q2) + I1 + I2
    M12 = m2 (lc2^2 + l1 lc2 cos q2) + I2
    M22 = m2 lc2^2 + I2
    C   = [-m2 l1 lc2 sin q2 (2 w1 w2 + w2^2),  m2 l1 lc2 sin q2 w1^2]
    G   = [(m1 lc1 + m2 l1) g cos q1 + m2 lc2 g cos(q1 + q2),  m2 lc2 g cos(q1 + q2)]
"""

from __future__ import annotations

import jax.numpy as jnp
import numpy as np

from daecbf.dae import DaeSystem
from daecbf.projection import BarrierSpec


def inertia(p, q2):
    c2 = jnp.cos(q2)
    m11 = (
        p["m1"] * p["lc1"] ** 2
        + p["m2"] * (p["l1"] ** 2 + p["lc2"] ** 2 + 2 * p["l1"] * p["lc2"] * c2)
        + p["I1"]
        + p["I2"]
    )
    m12 = p["m2"] * (p["lc2"] ** 2 + p["l1"] * p["lc2"] * c2) + p["I2"]
    m22 = p["m2"] * p["lc2"] ** 2 + p["I2"]
    return jnp.array([[m11, m12], [m12, m22]])


def _inv2(m):
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return jnp.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def gravity(p, q1, q2, xp=jnp):
    g2 = p["m2"] * p["lc2"] * p["g"] * xp.cos(q1 + q2)
    g1 = (p["m1"] * p["lc1"] + p["m2"] * p["l1"]) * p["g"] * xp.cos(q1) + g2
    return xp.array([g1, g2])


def bias(p, x):
    """C + G + D w."""
    q1, q2, w1, w2 = x[0], x[1], x[2], x[3]
    k = p["m2"] * p["l1"] * p["lc2"] * jnp.sin(q2)
    cor = jnp.array([-k * (2 * w1 * w2 + w2**2), k * w1**2])
    damp = jnp.array([p["d1"] * w1, p["d2"] * w2])
    return cor + gravity(p, q1, q2) + damp


def tip_height(p, x):
    return p["l1"] * jnp.sin(x[0]) + p["l2"] * jnp.sin(x[0] + x[1])


def mechanical_energy(p, x):
    """Kinetic plus potential energy (potential zero at y = 0)."""
    x = jnp.asarray(x)
    w = x[2:4]
    kin = 0.5 * w @ inertia(p, x[1]) @ w
    y1 = p["lc1"] * jnp.sin(x[0])
    y2 = p["l1"] * jnp.sin(x[0]) + p["lc2"] * jnp.sin(x[0] + x[1])
    pot = p["g"] * (p["m1"] * y1 + p["m2"] * y2)
    return float(kin + pot)


def build(p):
    def f_d(x):
        minv = _inv2(inertia(p, x[1]))
        return jnp.concatenate([x[2:4], -minv @ bias(p, x)])

    def g_d(x):
        minv = _inv2(inertia(p, x[1]))
        return jnp.concatenate([jnp.zeros((2, 2)), minv], axis=0)

    def phi(x):
        return jnp.atleast_1d(tip_height(p, x) - x[4])

    u_max = p["u_max"]
    polytope = (np.vstack([np.eye(2), -np.eye(2)]), np.full(4, u_max))
    system = DaeSystem(
        n_d=4,
        n_a=1,
        n_u=2,
        f_d=f_d,
        g_d=g_d,
        # The constraint is holonomic in the positions only; after eliminating
        # derivatives every level keeps the same coefficient map.
        constraint_chain=(phi, phi, phi),
        declared_index=2,
        input_polytope=polytope,
        name="manipulator",
    )

    y_max = p["y_max"]
    offset = p.get("b_offset", 0.0)

    def h(x):
        return y_max - x[4]

    def b(x):
        return h(x) + offset

    order = int(p["hocbf_order"])
    spec = BarrierSpec(b=b, h=h, hocbf_order=order, alphas=(p["kappa"],))
    unaware = BarrierSpec(b=h, h=h, hocbf_order=order, alphas=(p["kappa"],))
    return system, spec, unaware


def nominal_controller(p):
    """Saturated PD law towards the zero configuration with gravity compensation."""
    kp, kd, gc, lim = p["nominal_kp"], p["nominal_kd"], p["gravity_comp"], p["u_max"]

    def u_nom(x):
        x = np.asarray(x, dtype=float)
        u = gc * gravity(p, x[0], x[1], xp=np) - kp * x[:2] - kd * x[2:4]
        return np.clip(u, -lim, lim)

    return u_nom
