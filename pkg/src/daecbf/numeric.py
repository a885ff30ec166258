"""Dense linear algebra, forward-mode differentiation and Newton root finding.

Everything here is written against ``jax.numpy`` so that it can be traced,
jit-compiled and differentiated again by the layers above (nested Lie
derivatives push tangents through the pseudoinverse).  Matrices are plain
2-D float64 arrays.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from daecbf.errors import NoConvergence, NonFinite

DEFAULT_RANK_TOL = 1e-10

_JACOBI_TOL = 1e-15
_JACOBI_MAX_SWEEPS = 40


def _is_traced(x) -> bool:
    return isinstance(x, jax.core.Tracer)


def check_finite(x, what: str = "value"):
    """Raise NonFinite on concrete NaN/Inf; traced values pass through."""
    if _is_traced(x):
        return x
    arr = np.asarray(x)
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{what} contains NaN or Inf")
    return x


# ---------------------------------------------------------------------------
# SVD by one-sided (Hestenes) Jacobi rotations
# ---------------------------------------------------------------------------


def _safe_sqrt(v):
    pos = v > 0
    return jnp.where(pos, jnp.sqrt(jnp.where(pos, v, 1.0)), 0.0)


def _rotate_pair(w, v, i, j):
    a_i, a_j = w[:, i], w[:, j]
    alpha = a_i @ a_i
    beta = a_j @ a_j
    gamma = a_i @ a_j
    tau = 0.5 * (beta - alpha)
    sgn = jnp.where(tau >= 0, 1.0, -1.0)
    den = jnp.abs(tau) + jnp.hypot(tau, gamma)
    ok = den > 0
    # t = tan(theta) written without dividing by gamma, so the rotation (and
    # its tangent) stays smooth as the pair becomes orthogonal.
    t = jnp.where(ok, sgn * gamma / jnp.where(ok, den, 1.0), 0.0)
    c = 1.0 / jnp.sqrt(1.0 + t * t)
    s = c * t
    w = w.at[:, i].set(c * a_i - s * a_j).at[:, j].set(s * a_i + c * a_j)
    v_i, v_j = v[:, i], v[:, j]
    v = v.at[:, i].set(c * v_i - s * v_j).at[:, j].set(s * v_i + c * v_j)
    scale = _safe_sqrt(alpha * beta)
    off = jnp.where(scale > 0, jnp.abs(gamma) / jnp.where(scale > 0, scale, 1.0), 0.0)
    return w, v, off


def _jacobi_tall(a):
    """Orthogonalise the columns of a tall matrix: returns (W, V) with A V = W."""
    n = a.shape[1]
    v0 = jnp.eye(n, dtype=a.dtype)
    if n == 1:
        return a, v0
    pairs = list(combinations(range(n), 2))

    def sweep(state):
        w, v, k, settled = state
        off = jnp.zeros((), a.dtype)
        for i, j in pairs:
            w, v, o = _rotate_pair(w, v, i, j)
            off = jnp.maximum(off, o)
        # Two extra sweeps after convergence let forward-mode tangents settle
        # as well as the primal values.
        settled = jnp.where(off <= _JACOBI_TOL, settled + 1, 0)
        return w, v, k + 1, settled

    def keep_going(state):
        _, _, k, settled = state
        return (k < _JACOBI_MAX_SWEEPS) & (settled < 2)

    w, v, _, _ = jax.lax.while_loop(keep_going, sweep, (a, v0, 0, 0))
    return w, v


def svd(m):
    """Thin SVD ``m = U diag(s) Vt`` with singular values in descending order."""
    m = jnp.asarray(m, dtype=jnp.float64)
    if m.ndim != 2:
        raise ValueError("svd expects a 2-D matrix")
    wide = m.shape[0] < m.shape[1]
    a = m.T if wide else m
    w, v = _jacobi_tall(a)
    s = _safe_sqrt(jnp.sum(w * w, axis=0))
    order = jnp.argsort(-s)
    s = s[order]
    w = w[:, order]
    v = v[:, order]
    u = jnp.where(s > 0, w / jnp.where(s > 0, s, 1.0), 0.0)
    if wide:
        return v, s, u.T
    return u, s, v.T


def singular_values(m):
    m = jnp.asarray(m, dtype=jnp.float64)
    if _is_traced(m):
        return svd(m)[1]
    return _sv_jit(m)


_sv_jit = jax.jit(lambda m: svd(m)[1])


def _pinv_tall(a, rank_tol):
    w, v = _jacobi_tall(a)
    sq = jnp.sum(w * w, axis=0)
    s_max_sq = jnp.max(sq)
    keep = (sq > (rank_tol * rank_tol) * s_max_sq) & (s_max_sq > 0)
    inv_sq = jnp.where(keep, 1.0 / jnp.where(keep, sq, 1.0), 0.0)
    # A V = W and W = U diag(s), so A+ = V diag(1/s^2) W^T.
    return (v * inv_sq) @ w.T


def pseudoinverse(m, rank_tol: float = DEFAULT_RANK_TOL):
    """Moore-Penrose pseudoinverse via one-sided Jacobi SVD.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.
    Works on concrete arrays and inside traced/differentiated code.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    check_finite(m, "matrix")
    m = jnp.asarray(m, dtype=jnp.float64)
    if m.ndim != 2:
        raise ValueError("pseudoinverse expects a 2-D matrix")
    if _is_traced(m):
        return _pinv_dispatch(m, rank_tol)
    return _pinv_jit(m, rank_tol)


def _pinv_dispatch(m, rank_tol):
    if m.shape[0] < m.shape[1]:
        return _pinv_tall(m.T, rank_tol).T
    return _pinv_tall(m, rank_tol)


_pinv_jit = jax.jit(_pinv_dispatch, static_argnums=1)


def numeric_rank(m, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rank_tol * sigma_max``."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return 0
    # LAPACK singular values: rank queries run on concrete data only and
    # never need derivatives, so the compiled Jacobi path is not required.
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


# ---------------------------------------------------------------------------
# Forward-mode differentiation
# ---------------------------------------------------------------------------


class DualVector(NamedTuple):
    """Primal value together with its tangent along every seed direction.

    ``tangent`` has shape ``value.shape + (n_seeds,)``.
    """

    value: jax.Array
    tangent: jax.Array


def push_forward(f: Callable, x, seeds=None) -> DualVector:
    """Evaluate ``f`` at ``x`` carrying tangents for each column of ``seeds``.

    With the default full seeding (identity) the tangent is the Jacobian.
    """
    x = jnp.asarray(x, dtype=jnp.float64)
    if seeds is None:
        seeds = jnp.eye(x.shape[0], dtype=x.dtype)
    seeds = jnp.asarray(seeds, dtype=x.dtype)

    def one(direction):
        return jax.jvp(f, (x,), (direction,))

    values, tangents = jax.vmap(one, in_axes=1, out_axes=(None, -1))(seeds)
    return DualVector(values, tangents)


def jacobian(f: Callable, x):
    """d f / d x by forward mode; shape ``f(x).shape + (len(x),)``."""
    out = push_forward(f, x).tangent
    return check_finite(out, "jacobian")


def directional(f: Callable, x, directions):
    """d f(x) / dx . directions, seeding only along the given columns."""
    return push_forward(f, x, directions).tangent


def lie(psi: Callable, field: Callable) -> Callable:
    """Return the map x -> d psi(x)/dx . field(x), seeded along the field only."""

    def lie_psi(x):
        return jax.jvp(psi, (x,), (field(x),))[1]

    return lie_psi


# ---------------------------------------------------------------------------
# Newton root finding
# ---------------------------------------------------------------------------


def newton_root(
    r: Callable,
    x0,
    tol: float = 1e-12,
    max_iter: int = 50,
    jac: Callable | None = None,
    rank_tol: float = DEFAULT_RANK_TOL,
):
    """Solve ``r(x) = 0`` by Newton steps ``x -= pinv(J) r``.

    Non-square systems are handled in the least-squares / minimum-norm sense.
    Returns ``x`` with ``max|r(x)| <= tol``; raises NoConvergence otherwise.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    check_finite(x, "initial guess")
    if jac is None:
        def jac(z):
            return jacobian(lambda y: jnp.atleast_1d(r(y)), z)

    res = np.atleast_1d(np.asarray(r(x), dtype=np.float64))
    norm = float(np.max(np.abs(res))) if res.size else 0.0
    for _ in range(max_iter):
        if norm <= tol:
            return x
        jmat = np.asarray(jac(x), dtype=np.float64).reshape(res.size, x.size)
        step = np.asarray(pseudoinverse(jmat, rank_tol)) @ res
        x = x - step
        res = np.atleast_1d(np.asarray(r(x), dtype=np.float64))
        if not np.all(np.isfinite(res)):
            raise NoConvergence("residual became non-finite", x, float("inf"))
        norm = float(np.max(np.abs(res)))
    if norm <= tol:
        return x
    raise NoConvergence(
        f"Newton did not converge in {max_iter} iterations (|r|={norm:.3e})", x, norm
    )
