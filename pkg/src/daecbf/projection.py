"""Projected dynamics on the constraint manifold and HOCBF terms along them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from daecbf.dae import (
    DaeSystem,
    IndexAnalysis,
    analyze_index,
    eta_matrix,
    level_jacobians,
    projected_field_fns,
)
from daecbf.errors import DegenerateRow, OffManifold, RegularityViolated
from daecbf.numeric import (
    DEFAULT_RANK_TOL,
    check_finite,
    directional,
    lie,
    numeric_rank,
    pseudoinverse,
)

DEFAULT_MANIFOLD_TOL = 1e-8


@dataclass(frozen=True)
class BarrierSpec:
    """Candidate barrier ``b``, safety function ``h`` and linear class-K gains.

    ``alphas[i]`` is the gain kappa of the i-th class-K function, so the
    hierarchy is psi_{i+1} = L_f psi_i + alphas[i] psi_i and the filter row is
    L_g psi_{d-1} u + L_f psi_{d-1} + alphas[d-1] psi_{d-1} >= 0.
    """

    b: Callable
    h: Callable
    hocbf_order: int = 1
    alphas: tuple = (1.0,)

    def __post_init__(self):
        if self.hocbf_order < 1:
            raise ValueError("hocbf_order must be >= 1")
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if len(alphas) == 1 and self.hocbf_order > 1:
            alphas = alphas * self.hocbf_order
        if len(alphas) != self.hocbf_order:
            raise ValueError("need one class-K gain per HOCBF level")
        if any(not a > 0 for a in alphas):
            raise ValueError("class-K gains must be positive")
        object.__setattr__(self, "alphas", alphas)


def _scalar(fn):
    return lambda x: jnp.reshape(fn(x), ())


def lie_derivatives(psi: Callable, f_hat: Callable, g_hat: Callable, order: int):
    """Traceable x -> (L_f^order psi, L_g L_f^(order-1) psi)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    chain = [_scalar(psi)]
    for _ in range(order):
        chain.append(lie(chain[-1], f_hat))

    def evaluate(x):
        return chain[order](x), directional(chain[order - 1], x, g_hat(x))

    return evaluate


def hocbf_fn(spec: BarrierSpec, f_hat: Callable, g_hat: Callable):
    """Traceable x -> (psi_0..psi_{d-1}, a_row, c_const)."""
    d = spec.hocbf_order
    psis = [_scalar(spec.b)]
    for i in range(1, d):
        prev, kappa, lf = psis[-1], spec.alphas[i - 1], lie(psis[-1], f_hat)
        psis.append((lambda p, k, l: lambda z: l(z) + k * p(z))(prev, kappa, lf))
    last = psis[-1]

    def evaluate(x):
        values = jnp.stack([p(x) for p in psis])
        a_row = directional(last, x, g_hat(x))
        c_const = lie(last, f_hat)(x) + spec.alphas[d - 1] * values[-1]
        return values, a_row, c_const

    return evaluate


class ProjectedDynamics:
    """Evaluators for f_hat, g_hat, P^(k) and the barrier terms of one system.

    Compiled evaluators are cached per instance; the object itself is
    immutable after construction and safe to share.
    """

    def __init__(
        self,
        system: DaeSystem,
        analysis: IndexAnalysis | None = None,
        probes: Sequence | None = None,
        rank_tol: float = DEFAULT_RANK_TOL,
        manifold_tol: float = DEFAULT_MANIFOLD_TOL,
    ):
        if analysis is None:
            if probes is None:
                raise ValueError("need either an IndexAnalysis or probe points")
            analysis = analyze_index(system, probes, rank_tol=rank_tol)
        self.system = system
        self.analysis = analysis
        self.rank_tol = rank_tol
        self.manifold_tol = manifold_tol
        self._f_hat, self._g_hat = projected_field_fns(system, rank_tol)
        self._fields_jit = jax.jit(lambda x: (self._f_hat(x), self._g_hat(x)))
        self._compat_jit = jax.jit(self._compat_raw)
        self._proj_jit = jax.jit(self._projectors_raw)
        self._phi_jit = jax.jit(system.phi)
        self._barrier_cache: dict = {}
        self._qp_cache: dict = {}

    # -- traceable pieces ---------------------------------------------------

    @property
    def f_hat_fn(self) -> Callable:
        return self._f_hat

    @property
    def g_hat_fn(self) -> Callable:
        return self._g_hat

    def _projectors_raw(self, x):
        sys = self.system
        mats = []
        for k in range(1, sys.declared_index + 1):
            _, j_a = level_jacobians(sys, x, k)
            mats.append(jnp.eye(j_a.shape[0]) - j_a @ pseudoinverse(j_a, self.rank_tol))
        return jnp.stack(mats)

    def _compat_raw(self, x):
        """Stacked (P eta g_d, -P J_d f_d) over levels k = 1..nu."""
        sys = self.system
        fd = sys.f_d(x)
        gd = jnp.reshape(sys.g_d(x), (sys.n_d, sys.n_u))
        rows, rhs = [], []
        for k in range(1, sys.declared_index + 1):
            j_d, j_a = level_jacobians(sys, x, k)
            p = jnp.eye(j_a.shape[0]) - j_a @ pseudoinverse(j_a, self.rank_tol)
            eta = eta_matrix(j_d, fd, self.analysis.d_prime)
            rows.append(p @ eta @ gd)
            rhs.append(-p @ (j_d @ fd))
        return jnp.concatenate(rows, axis=0), jnp.concatenate(rhs)

    # -- concrete evaluators -------------------------------------------------

    def phi_residual(self, x) -> float:
        return float(np.max(np.abs(np.asarray(self._phi_jit(jnp.asarray(x))))))

    def check_on_manifold(self, x):
        res = self.phi_residual(x)
        if not res <= self.manifold_tol:
            raise OffManifold(f"|phi(x)| = {res:.3e} exceeds manifold_tol {self.manifold_tol:g}")

    def fields(self, x):
        """(f_hat, g_hat) as numpy arrays, no manifold or regularity checks."""
        f, g = self._fields_jit(jnp.asarray(x, dtype=jnp.float64))
        return np.asarray(f), np.asarray(g)

    def projectors(self, x):
        """Array of shape (nu, n_m, n_m) with P^(1..nu)(x)."""
        return np.asarray(self._proj_jit(jnp.asarray(x, dtype=jnp.float64)))

    def compatibility_terms(self, x):
        e_mat, e_vec = self._compat_jit(jnp.asarray(x, dtype=jnp.float64))
        return np.asarray(e_mat), np.asarray(e_vec)

    def barrier_evaluator(self, spec: BarrierSpec) -> Callable:
        """Compiled x -> (psi values, a_row, c_const) for ``spec``."""
        fn = self._barrier_cache.get(spec)
        if fn is None:
            fn = jax.jit(hocbf_fn(spec, self._f_hat, self._g_hat))
            self._barrier_cache[spec] = fn
        return fn

    def _qp_raw(self, spec: BarrierSpec) -> Callable:
        barrier = hocbf_fn(spec, self._f_hat, self._g_hat)

        def terms(x):
            res = jnp.max(jnp.abs(self.system.phi(x)))
            e_mat, e_vec = self._compat_raw(x)
            return (res, e_mat, e_vec) + tuple(barrier(x))

        return terms

    def qp_terms(self, spec: BarrierSpec) -> Callable:
        """Compiled x -> (|phi|_inf, E, e, psis, a_row, c_const) in one call."""
        key = ("single", spec)
        fn = self._qp_cache.get(key)
        if fn is None:
            fn = jax.jit(self._qp_raw(spec))
            self._qp_cache[key] = fn
        return fn

    def qp_terms_batch(self, spec: BarrierSpec) -> Callable:
        """Batched form of :meth:`qp_terms` over a leading axis of states."""
        key = ("batch", spec)
        fn = self._qp_cache.get(key)
        if fn is None:
            fn = jax.jit(jax.vmap(self._qp_raw(spec)))
            self._qp_cache[key] = fn
        return fn

    def is_regular_at(self, x) -> bool:
        sys = self.system
        x = jnp.asarray(x, dtype=jnp.float64)
        j_d, j_a = level_jacobians(sys, x, sys.declared_index)
        gd = jnp.reshape(sys.g_d(x), (sys.n_d, sys.n_u))
        eta = eta_matrix(j_d, sys.f_d(x), self.analysis.d_prime)
        ext = np.concatenate([np.asarray(j_a), np.asarray(eta @ gd)], axis=1)
        return numeric_rank(ext, self.rank_tol) == sys.n_m


def projection_operator(pd: ProjectedDynamics, x, k: int):
    """P^(k)(x) = I - J_a^(k) (J_a^(k))^+."""
    if not 1 <= k <= pd.system.declared_index:
        raise ValueError(f"k must be in [1, {pd.system.declared_index}]")
    check_finite(np.asarray(x, dtype=float), "state")
    return check_finite(pd.projectors(x)[k - 1], "projector")


def projected_fields(pd: ProjectedDynamics, x):
    """(f_hat, g_hat) at a manifold point, with manifold and regularity checks."""
    x = check_finite(np.asarray(x, dtype=float), "state")
    pd.check_on_manifold(x)
    if not pd.is_regular_at(x):
        raise RegularityViolated("extended Jacobian is rank deficient at x", [x])
    f, g = pd.fields(x)
    return check_finite(f, "f_hat"), check_finite(g, "g_hat")


def lie_chain(pd: ProjectedDynamics, psi: Callable, x, order: int):
    """(L_f^order psi(x), L_g L_f^(order-1) psi(x)) along the projected fields."""
    x = jnp.asarray(check_finite(np.asarray(x, dtype=float), "state"))
    lf, lg = lie_derivatives(psi, pd.f_hat_fn, pd.g_hat_fn, order)(x)
    return float(check_finite(lf, "Lie derivative")), np.asarray(check_finite(lg, "Lie row"))


def hocbf_terms(pd: ProjectedDynamics, spec: BarrierSpec, x, boundary_tol: float = 1e-9):
    """psi list, a_row = L_g psi_{d-1} and c_const for the row a_row u + c_const >= 0."""
    x = check_finite(np.asarray(x, dtype=float), "state")
    psis, a_row, c_const = pd.barrier_evaluator(spec)(jnp.asarray(x))
    psis = np.asarray(check_finite(psis, "psi"))
    a_row = np.asarray(check_finite(a_row, "a_row"))
    c_const = float(check_finite(c_const, "c_const"))
    if abs(psis[0]) <= boundary_tol and np.max(np.abs(a_row), initial=0.0) < pd.rank_tol:
        raise DegenerateRow("barrier row has no input authority at a boundary point")
    return list(psis), a_row, c_const
