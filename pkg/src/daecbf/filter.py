"""DAE-aware CBF quadratic program: assembly and a small active-set solver."""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from enum import Enum

import jax
import jax.numpy as jnp
import numpy as np

from daecbf.dae import DaeSystem
from daecbf.errors import MaxIterations, OffManifold, StructuralInfeasibility
from daecbf.numeric import check_finite
from daecbf.projection import BarrierSpec, ProjectedDynamics, hocbf_fn
from daecbf.verifier.lp import FarkasCertificate, lp_feasible_arrays

ZERO_ROW_TOL = 1e-10
KKT_TOL = 1e-10


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class QpProblem:
    """min 1/2 u^T H u + c^T u  s.t.  E u = e,  A u <= r."""

    hessian: np.ndarray
    linear: np.ndarray
    eq_rows: tuple
    ineq_rows: tuple
    labels: tuple = ()

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        c = np.atleast_1d(np.asarray(self.linear, dtype=float))
        n = c.size
        e_mat, e_vec = (np.asarray(v, dtype=float) for v in self.eq_rows)
        a_mat, r_vec = (np.asarray(v, dtype=float) for v in self.ineq_rows)
        e_mat = e_mat.reshape(-1, n)
        a_mat = a_mat.reshape(-1, n)
        e_vec, r_vec = e_vec.reshape(-1), r_vec.reshape(-1)
        if h.shape != (n, n) or e_mat.shape[0] != e_vec.size or a_mat.shape[0] != r_vec.size:
            raise ValueError("inconsistent QP dimensions")
        if not np.allclose(h, h.T):
            raise ValueError("hessian must be symmetric")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "linear", c)
        object.__setattr__(self, "eq_rows", (e_mat, e_vec))
        object.__setattr__(self, "ineq_rows", (a_mat, r_vec))

    @property
    def n_u(self) -> int:
        return self.linear.size

    def stacked_inequalities(self):
        """Equalities written as opposing inequality pairs, followed by A u <= r."""
        e_mat, e_vec = self.eq_rows
        a_mat, r_vec = self.ineq_rows
        return (
            np.vstack([e_mat, -e_mat, a_mat]),
            np.concatenate([e_vec, -e_vec, r_vec]),
        )

    def residuals(self, u):
        """(max |E u - e|, max positive part of A u - r)."""
        e_mat, e_vec = self.eq_rows
        a_mat, r_vec = self.ineq_rows
        eq = float(np.max(np.abs(e_mat @ u - e_vec), initial=0.0))
        ineq = float(np.max(a_mat @ u - r_vec, initial=0.0))
        return eq, max(ineq, 0.0)


@dataclass(frozen=True)
class FilterResult:
    status: Status
    u: np.ndarray | None = None
    active_set: tuple = ()
    objective: float = float("nan")
    multipliers: np.ndarray | None = None
    certificate: FarkasCertificate | None = None
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _independent_rows(rows, candidates, start=()):
    """Greedily add candidate rows (in order) that keep ``rows[chosen]`` independent."""
    chosen = list(start)
    for i in candidates:
        trial = rows[chosen + [i]]
        if np.linalg.matrix_rank(trial, tol=1e-10 * max(1.0, np.max(np.abs(trial)))) == len(
            chosen
        ) + 1:
            chosen.append(i)
    return chosen


def solve_qp(qp: QpProblem) -> FilterResult:
    """Primal active-set method; equalities always stay in the working set."""
    h, c = qp.hessian, qp.linear
    n = qp.n_u
    e_mat, e_vec = qp.eq_rows
    a_mat, r_vec = qp.ineq_rows
    n_eq, n_in = e_vec.size, r_vec.size
    rows = np.vstack([e_mat, a_mat])
    rhs = np.concatenate([e_vec, r_vec])
    if np.linalg.eigvalsh(h)[0] <= 0:
        raise ValueError("hessian must be positive definite")

    u_free = np.linalg.solve(h, -c)
    eq_res, in_res = qp.residuals(u_free)
    if eq_res <= KKT_TOL and in_res <= KKT_TOL:
        # The unconstrained minimiser is feasible, so it is the answer.
        return FilterResult(
            Status.OPTIMAL,
            u=u_free,
            objective=float(0.5 * u_free @ h @ u_free + c @ u_free),
            multipliers=np.zeros(n_eq + n_in),
        )

    lp = lp_feasible_arrays(*qp.stacked_inequalities())
    if not lp.feasible:
        return FilterResult(Status.INFEASIBLE, certificate=lp.certificate)
    u = lp.witness

    eq_ids = _independent_rows(rows, list(range(n_eq)))
    scale = 1.0 + np.abs(r_vec)
    tight = [n_eq + i for i in range(n_in) if a_mat[i] @ u - r_vec[i] >= -1e-10 * scale[i]]
    work = _independent_rows(rows, tight, start=eq_ids)

    cap = 100 * (n + n_eq + n_in)
    for it in range(1, cap + 1):
        k = len(work)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = h
        if k:
            kkt[:n, n:] = rows[work].T
            kkt[n:, :n] = rows[work]
        grad = h @ u + c
        sol = np.linalg.solve(kkt, np.concatenate([-grad, np.zeros(k)]))
        p, mu = sol[:n], sol[n:]
        if np.max(np.abs(p), initial=0.0) <= 1e-12 * (1.0 + np.max(np.abs(u))):
            ineq_pos = [j for j, idx in enumerate(work) if idx >= n_eq]
            if not ineq_pos or min(mu[j] for j in ineq_pos) >= -KKT_TOL:
                full_mu = np.zeros(n_eq + n_in)
                full_mu[work] = mu
                active = tuple(sorted(idx - n_eq for idx in work if idx >= n_eq))
                return FilterResult(
                    Status.OPTIMAL,
                    u=u,
                    active_set=active,
                    objective=float(0.5 * u @ h @ u + c @ u),
                    multipliers=full_mu,
                    iterations=it,
                )
            worst = min(ineq_pos, key=lambda j: (mu[j], work[j]))
            work.pop(worst)
            continue
        alpha, blocking = 1.0, None
        ap = a_mat @ p
        for i in range(n_in):
            if n_eq + i in work or ap[i] <= 1e-14:
                continue
            step = (r_vec[i] - a_mat[i] @ u) / ap[i]
            if step < alpha:
                alpha, blocking = max(step, 0.0), i
        u = u + alpha * p
        if blocking is not None:
            work.append(n_eq + blocking)
    raise MaxIterations(f"active-set QP exceeded {cap} iterations")


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def _prune_compatibility(e_mat, e_vec):
    keep = []
    for i in range(e_vec.size):
        lhs_zero = np.max(np.abs(e_mat[i]), initial=0.0) <= ZERO_ROW_TOL
        if lhs_zero:
            if abs(e_vec[i]) > ZERO_ROW_TOL:
                raise StructuralInfeasibility(
                    f"compatibility row {i} has no input authority but drift {e_vec[i]:.3e}"
                )
            continue
        keep.append(i)
    return e_mat[keep], e_vec[keep]


def assemble_compatibility(pd: ProjectedDynamics, x):
    """Rows P eta g_d u = -P J_d f_d for every level, with trivial rows dropped."""
    x = check_finite(np.asarray(x, dtype=float), "state")
    e_mat, e_vec = pd.compatibility_terms(x)
    return _prune_compatibility(e_mat, e_vec)


def assemble_filter_qp(pd: ProjectedDynamics, spec: BarrierSpec, x, u_nom, check=True):
    x = check_finite(np.asarray(x, dtype=float), "state")
    u_nom = check_finite(np.atleast_1d(np.asarray(u_nom, dtype=float)), "u_nom")
    res, e_mat, e_vec, _, a_row, c_const = pd.qp_terms(spec)(x)
    if check and not float(res) <= pd.manifold_tol:
        raise OffManifold(f"|phi(x)| = {float(res):.3e} exceeds manifold_tol {pd.manifold_tol:g}")
    e_mat, e_vec = _prune_compatibility(np.asarray(e_mat), np.asarray(e_vec))
    return _build_qp(pd.system, u_nom, (e_mat, e_vec), np.asarray(a_row), float(c_const))


def _build_qp(sys: DaeSystem, u_nom, eq, a_row, c_const):
    a_u, r_u = sys.input_bounds()
    ineq_a = np.vstack([-a_row[None, :], a_u])
    ineq_r = np.concatenate([[c_const], r_u])
    labels = ("cbf",) + tuple(f"input{i}" for i in range(r_u.size))
    return QpProblem(
        hessian=np.eye(sys.n_u),
        linear=-u_nom,
        eq_rows=eq,
        ineq_rows=(ineq_a, ineq_r),
        labels=labels,
    )


def aware_filter(pd: ProjectedDynamics, spec: BarrierSpec, x, u_nom) -> FilterResult:
    return solve_qp(assemble_filter_qp(pd, spec, x, u_nom))


_UNAWARE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def raw_fields(sys: DaeSystem):
    """Differential dynamics padded with zeros for x_a (the constraint is ignored)."""

    def f_raw(x):
        return jnp.concatenate([sys.f_d(x), jnp.zeros(sys.n_a)])

    def g_raw(x):
        gd = jnp.reshape(sys.g_d(x), (sys.n_d, sys.n_u))
        return jnp.concatenate([gd, jnp.zeros((sys.n_a, sys.n_u))], axis=0)

    return f_raw, g_raw


def unaware_evaluator(sys: DaeSystem, spec: BarrierSpec):
    per_sys = _UNAWARE_CACHE.setdefault(sys, {})
    fn = per_sys.get(spec)
    if fn is None:
        fn = jax.jit(hocbf_fn(spec, *raw_fields(sys)))
        per_sys[spec] = fn
    return fn


def dae_unaware_filter(sys: DaeSystem, spec: BarrierSpec, x, u_nom) -> FilterResult:
    """Baseline CBF-QP on the raw differential dynamics, with no compatibility rows."""
    x = check_finite(np.asarray(x, dtype=float), "state")
    u_nom = check_finite(np.atleast_1d(np.asarray(u_nom, dtype=float)), "u_nom")
    _, a_row, c_const = unaware_evaluator(sys, spec)(x)
    empty = (np.zeros((0, sys.n_u)), np.zeros(0))
    return solve_qp(_build_qp(sys, u_nom, empty, np.asarray(a_row), float(c_const)))
