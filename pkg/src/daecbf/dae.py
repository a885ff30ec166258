"""Semi-explicit control-affine DAE model and its structural analysis.

A system is

    x_d' = f_d(x) + g_d(x) u,        0 = phi(x),       x = (x_d, x_a).

The user supplies a *constraint chain*: state-only maps ``chain[0] = phi``
and ``chain[k]`` for k = 1..nu, where ``chain[k]`` is the function whose
Jacobian governs the k-th projection level.  Levels below nu must vanish on
the manifold; level nu must have an algebraic Jacobian of full row rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from daecbf.errors import InconsistentIndex, RegularityViolated
from daecbf.numeric import (
    DEFAULT_RANK_TOL,
    check_finite,
    directional,
    jacobian,
    lie,
    numeric_rank,
    pseudoinverse,
)

PROBE_MAJORITY = 0.9


@dataclass(frozen=True, eq=False)
class DaeSystem:
    """Immutable description of a semi-explicit DAE.

    ``f_d``, ``g_d`` and every chain entry must be written with ``jax.numpy``
    so that they can be differentiated and compiled.
    """

    n_d: int
    n_a: int
    n_u: int
    f_d: Callable
    g_d: Callable
    constraint_chain: tuple
    declared_index: int
    input_polytope: tuple | None = None
    name: str = "dae"

    def __post_init__(self):
        if self.n_d < 1 or self.n_a < 0 or self.n_u < 1:
            raise ValueError("dimensions must satisfy n_d >= 1, n_a >= 0, n_u >= 1")
        if self.declared_index < 1:
            raise ValueError("declared_index must be >= 1")
        chain = tuple(self.constraint_chain)
        if len(chain) != self.declared_index + 1:
            raise ValueError(
                f"constraint_chain needs {self.declared_index + 1} entries, got {len(chain)}"
            )
        object.__setattr__(self, "constraint_chain", chain)
        if self.input_polytope is not None:
            a_u, r_u = self.input_polytope
            a_u = np.atleast_2d(np.asarray(a_u, dtype=float))
            r_u = np.atleast_1d(np.asarray(r_u, dtype=float))
            if a_u.shape != (r_u.size, self.n_u):
                raise ValueError("input polytope A_u must be (n_c, n_u) matching r_u")
            object.__setattr__(self, "input_polytope", (a_u, r_u))

    @property
    def n_x(self) -> int:
        return self.n_d + self.n_a

    @property
    def n_m(self) -> int:
        return int(jax.eval_shape(self.phi, jnp.zeros(self.n_x)).shape[0])

    @property
    def nu(self) -> int:
        return self.declared_index

    @property
    def n_input_rows(self) -> int:
        return 0 if self.input_polytope is None else self.input_polytope[1].size

    def phi(self, x):
        return jnp.atleast_1d(self.constraint_chain[0](x))

    def level(self, k: int) -> Callable:
        fn = self.constraint_chain[k]
        return lambda x: jnp.atleast_1d(fn(x))

    def split(self, x):
        return x[: self.n_d], x[self.n_d:]

    def input_bounds(self):
        """(A_u, r_u) with zero rows when the input is unconstrained."""
        if self.input_polytope is None:
            return np.zeros((0, self.n_u)), np.zeros(0)
        return self.input_polytope


@dataclass(frozen=True)
class IndexAnalysis:
    nu: int
    d_prime: int
    d: int
    j_a_rank: int
    regular: bool
    offending: tuple = field(default=())

    def __post_init__(self):
        if self.d != self.nu + self.d_prime - 1:
            raise ValueError("d must equal nu + d_prime - 1")


# ---------------------------------------------------------------------------
# Traceable building blocks (shared with the projection layer)
# ---------------------------------------------------------------------------


def level_jacobians(sys: DaeSystem, x, k: int):
    """(J_d, J_a) of chain level k at x; traceable."""
    jac = jacobian(sys.level(k), x)
    return jac[:, : sys.n_d], jac[:, sys.n_d:]


def constraint_jacobians(sys: DaeSystem, x, level: int):
    """Jacobians of ``chain[level]`` with respect to x_d and x_a."""
    if not 0 <= level <= sys.declared_index:
        raise ValueError(f"level must be in [0, {sys.declared_index}]")
    x = jnp.asarray(check_finite(np.asarray(x, dtype=float), "state"))
    j_d, j_a = level_jacobians(sys, x, level)
    return np.asarray(check_finite(j_d, "J_d")), np.asarray(check_finite(j_a, "J_a"))


def eta_matrix(j_d, f_d, d_prime: int):
    """(J_d f_d)^(d'-1) J_d, with the power taken row by row for n_m > 1."""
    if d_prime == 1:
        return j_d
    drift = j_d @ f_d
    return (drift ** (d_prime - 1))[:, None] * j_d


def projected_field_fns(sys: DaeSystem, rank_tol: float = DEFAULT_RANK_TOL):
    """Return traceable ``f_hat(x)`` and ``g_hat(x)`` built from level-nu Jacobians."""
    nu = sys.declared_index

    def f_hat(x):
        j_d, j_a = level_jacobians(sys, x, nu)
        fd = sys.f_d(x)
        if sys.n_a == 0:
            return fd
        return jnp.concatenate([fd, -pseudoinverse(j_a, rank_tol) @ (j_d @ fd)])

    def g_hat(x):
        j_d, j_a = level_jacobians(sys, x, nu)
        gd = jnp.reshape(sys.g_d(x), (sys.n_d, sys.n_u))
        if sys.n_a == 0:
            return gd
        return jnp.concatenate([gd, -pseudoinverse(j_a, rank_tol) @ (j_d @ gd)], axis=0)

    return f_hat, g_hat


# ---------------------------------------------------------------------------
# Index analysis
# ---------------------------------------------------------------------------


def _probe_data(sys: DaeSystem, orders: int, first: int, rank_tol: float):
    """Compiled batch map returning coupling norms for orders first..first+orders-1
    together with the level-nu Jacobians and f_d, g_d needed for the rank tests.

    The coupling norm of order k is max|J_d^(nu) . d(L_fhat^(k-1) x_d)/dx . g_hat|.
    """
    f_hat, g_hat = projected_field_fns(sys, rank_tol)
    nu = sys.declared_index

    def data(x):
        j_d, j_a = level_jacobians(sys, x, nu)
        gh = g_hat(x)
        gd = jnp.reshape(sys.g_d(x), (sys.n_d, sys.n_u))
        norms = []
        # L_fhat x_d = f_d exactly, so order 1 needs no derivative and the
        # chain for higher orders starts from f_d.
        q = sys.f_d
        for _ in range(max(first - 2, 0)):
            q = lie(q, f_hat)
        for order in range(first, first + orders):
            if order == 1:
                coupling = j_d @ gd
            else:
                coupling = j_d @ directional(q, x, gh)
                q = lie(q, f_hat)
            norms.append(jnp.max(jnp.abs(coupling)))
        return jnp.stack(norms), j_d, j_a, sys.f_d(x), gd

    return jax.jit(jax.vmap(data))


def analyze_index(
    sys: DaeSystem,
    probes: Sequence,
    rank_tol: float = DEFAULT_RANK_TOL,
    strict: bool = True,
    max_order: int | None = None,
) -> IndexAnalysis:
    """Confirm the declared index and compute d', d and regularity at probe points.

    With ``strict`` a regularity failure raises; otherwise the returned
    analysis carries ``regular=False`` and the offending probe indices.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 0:
        raise ValueError("analyze_index needs at least one probe")
    check_finite(probes, "probes")
    nu = sys.declared_index
    n_m = sys.n_m
    max_order = max_order or sys.n_x

    xs = jnp.asarray(probes)
    batch = 2
    d_prime, first = None, 1
    while d_prime is None and first <= max_order:
        count = min(batch, max_order - first + 1)
        norms, j_d, j_a, f_d, g_d = (
            np.asarray(v) for v in _probe_data(sys, count, first, rank_tol)(xs)
        )
        hits = np.mean(norms > rank_tol, axis=0) >= PROBE_MAJORITY
        if np.any(hits):
            d_prime = first + int(np.argmax(hits))
        first += count
    if d_prime is None:
        raise InconsistentIndex(
            f"input never reaches the level-{nu} constraint within {max_order} differentiations"
        )

    j_a_ranks = [numeric_rank(j, rank_tol) for j in j_a]
    bad_index = [i for i, r in enumerate(j_a_ranks) if r < n_m]
    if bad_index:
        raise InconsistentIndex(
            f"J_a at level {nu} is rank deficient at {len(bad_index)} probe(s)", bad_index
        )
    offending = []
    for i in range(probes.shape[0]):
        eta = np.asarray(eta_matrix(j_d[i], f_d[i], d_prime))
        if numeric_rank(np.hstack([j_a[i], eta @ g_d[i]]), rank_tol) < n_m:
            offending.append(i)
    if offending and strict:
        raise RegularityViolated(
            f"extended Jacobian loses row rank at {len(offending)} probe(s)", offending
        )
    return IndexAnalysis(
        nu=nu,
        d_prime=d_prime,
        d=nu + d_prime - 1,
        j_a_rank=min(j_a_ranks),
        regular=not offending,
        offending=tuple(offending),
    )


def control_influence(sys: DaeSystem, x, level: int, d_prime: int):
    """eta^(level)(x) = (J_d f_d)^(d'-1) J_d; exactly J_d when d' = 1."""
    if d_prime < 1:
        raise ValueError("d_prime must be >= 1")
    x = jnp.asarray(check_finite(np.asarray(x, dtype=float), "state"))
    j_d, _ = level_jacobians(sys, x, level)
    return np.asarray(check_finite(eta_matrix(j_d, sys.f_d(x), d_prime), "eta"))


def check_regularity(sys: DaeSystem, points: Sequence, rank_tol: float = DEFAULT_RANK_TOL):
    """(regular, offending point indices) for the extended Jacobian at ``points``."""
    analysis = analyze_index(sys, points, rank_tol=rank_tol, strict=False)
    return analysis.regular, analysis.offending
