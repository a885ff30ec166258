"""Correctness check: min h over {phi = 0, b >= 0} within a box, with a grid oracle."""

from __future__ import annotations

import itertools
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize

from daecbf.dae import DaeSystem
from daecbf.errors import OracleDisagreement
from daecbf.projection import BarrierSpec
from daecbf.verifier.sampling import (
    in_box,
    manifold_samples,
    project_to_manifold,
    run_chunked,
    scalar_batch,
)

log = logging.getLogger(__name__)

CERTIFY_TOL = 1e-6
DEFAULT_STARTS = 64
DEFAULT_GRID = 50
STARTS_POOL = 1024


@dataclass(frozen=True)
class OracleStats:
    nlp_min: float
    grid_min: float
    grid_slack: float
    grid_points: int
    agree: bool

    def to_dict(self):
        return {
            "nlp_min": _finite_or_none(self.nlp_min),
            "grid_min": _finite_or_none(self.grid_min),
            "grid_slack": self.grid_slack,
            "grid_points": self.grid_points,
            "agree": self.agree,
        }


@dataclass(frozen=True)
class CorrectnessVerdict:
    certified: bool
    min_h: float
    argmin: np.ndarray | None
    counterexample: np.ndarray | None
    samples: int
    oracle: OracleStats
    wall_time_s: float = 0.0

    @property
    def verdict(self) -> str:
        return "Certified" if self.certified else "Violated"


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


class _Problem:
    """Compiled value and gradient maps for h, b and phi."""

    def __init__(self, sys: DaeSystem, spec: BarrierSpec):
        scalar = lambda f: (lambda x: jnp.reshape(f(x), ()))  # noqa: E731
        self.h = jax.jit(scalar(spec.h))
        self.b = jax.jit(scalar(spec.b))
        self.phi = jax.jit(sys.phi)
        self.dh = jax.jit(jax.grad(scalar(spec.h)))
        self.db = jax.jit(jax.grad(scalar(spec.b)))
        self.dphi = jax.jit(jax.jacfwd(sys.phi))


def _slsqp(prob: _Problem, x0, lo, hi):
    f = lambda x: float(prob.h(x))  # noqa: E731
    cons = (
        {"type": "eq", "fun": lambda x: np.asarray(prob.phi(x)), "jac": lambda x: np.asarray(prob.dphi(x))},
        {"type": "ineq", "fun": lambda x: float(prob.b(x)), "jac": lambda x: np.asarray(prob.db(x))},
    )
    res = minimize(
        f,
        x0,
        jac=lambda x: np.asarray(prob.dh(x)),
        bounds=list(zip(lo, hi)),
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-12},
    )
    return np.asarray(res.x, dtype=float)


def _admissible(sys, spec, xs, lo, hi, tol=CERTIFY_TOL):
    """Re-solve x_a and keep points with b >= -tol inside the box; returns (pts, h)."""
    xs = np.atleast_2d(xs)
    if xs.shape[0] == 0:
        return xs, np.zeros(0)
    pts, ok = project_to_manifold(sys, xs)
    b = scalar_batch(spec.b)(pts)
    keep = ok & in_box(pts, lo, hi, slack=1e-9) & (b >= -tol)
    pts = pts[keep]
    return pts, scalar_batch(spec.h)(pts)


def _reduced_gradient_norm(sys: DaeSystem, h):
    """|d h / d x_d| along M, with x_a eliminated through phi = 0."""

    def norm(x):
        g = jax.grad(lambda z: jnp.reshape(h(z), ()))(x)
        jac = jax.jacfwd(sys.phi)(x)
        j_d, j_a = jac[:, : sys.n_d], jac[:, sys.n_d :]
        g_d, g_a = g[: sys.n_d], g[sys.n_d :]
        if sys.n_a:
            g_d = g_d - g_a @ jnp.linalg.solve(j_a, j_d)
        return jnp.linalg.norm(g_d)

    return jax.jit(jax.vmap(norm))


def grid_oracle(sys: DaeSystem, spec: BarrierSpec, lo, hi, points: int, x_a_guesses: int):
    """Dense x_d grid with x_a solved from several guesses; returns (min h, argmin, slack, count)."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    axes = [np.linspace(lo[i], hi[i], points) for i in range(sys.n_d)]
    grid_d = np.array(list(itertools.product(*axes))) if sys.n_d <= 2 else _mesh(axes)
    guesses = np.array(
        list(itertools.product(*[np.linspace(lo[i], hi[i], x_a_guesses) for i in range(sys.n_d, sys.n_x)]))
    )
    if x_a_guesses == 1:
        guesses = np.atleast_2d(0.5 * (lo[sys.n_d :] + hi[sys.n_d :]))
    best, best_x, count, lip = np.inf, None, 0, 0.0
    grad_norm = _reduced_gradient_norm(sys, spec.h)
    for guess in guesses:
        xs = np.hstack([grid_d, np.broadcast_to(guess, (grid_d.shape[0], sys.n_a))])
        pts, h = _admissible(sys, spec, xs, lo, hi, tol=0.0)
        count += pts.shape[0]
        if pts.shape[0]:
            i = int(np.argmin(h))
            if h[i] < best:
                best, best_x = float(h[i]), pts[i]
            lip = max(lip, float(np.max(run_chunked(grad_norm, pts))))
    cell = (hi[: sys.n_d] - lo[: sys.n_d]) / max(points - 1, 1)
    slack = lip * 0.5 * float(np.linalg.norm(cell))
    return best, best_x, slack, count


def _mesh(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def verify_correctness(
    sys: DaeSystem,
    spec: BarrierSpec,
    domain_box,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    grid_points: int = DEFAULT_GRID,
    x_a_grid_guesses: int = 1,
    threads: int | None = None,
) -> CorrectnessVerdict:
    """Certified iff min h >= -1e-6 over D n M n box under both the NLP and the grid."""
    t0 = time.perf_counter()
    lo, hi = (np.asarray(v, dtype=float) for v in domain_box)
    threads = threads or os.cpu_count() or 1
    prob = _Problem(sys, spec)

    pool = manifold_samples(sys, lo, hi, max(STARTS_POOL, starts), seed)
    b_pool = scalar_batch(spec.b)(pool)
    order = np.argsort(b_pool < 0, kind="stable")
    x_starts = pool[order[:starts]]

    def local(x0):
        return _slsqp(prob, x0, lo, hi)

    with warnings.catch_warnings():
        # SLSQP clips iterates to the box itself and warns each time.
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        if threads > 1 and len(x_starts) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                ends = list(ex.map(local, x_starts))
        else:
            ends = [local(x) for x in x_starts]
    cand = np.vstack([np.asarray(ends).reshape(-1, sys.n_x), pool[b_pool >= 0]])
    pts, h = _admissible(sys, spec, cand, lo, hi)
    nlp_min = float(np.min(h)) if h.size else np.inf
    nlp_x = pts[int(np.argmin(h))] if h.size else None

    grid_min, grid_x, slack, count = grid_oracle(sys, spec, lo, hi, grid_points, x_a_grid_guesses)
    nlp_ok, grid_ok = nlp_min >= -CERTIFY_TOL, grid_min >= -CERTIFY_TOL
    agree = nlp_ok == grid_ok or abs(nlp_min - grid_min) <= slack
    stats = OracleStats(nlp_min, grid_min, slack, count, bool(agree))
    log.info("correctness: nlp %.6g grid %.6g slack %.3g", nlp_min, grid_min, slack)
    if not agree:
        raise OracleDisagreement(
            f"NLP minimum {nlp_min:.6g} and grid minimum {grid_min:.6g} disagree beyond slack {slack:.3g}",
            nlp_value=nlp_min,
            grid_value=grid_min,
        )

    if grid_min < nlp_min:
        min_h, arg = grid_min, grid_x
    else:
        min_h, arg = nlp_min, nlp_x
    certified = bool(min_h >= -CERTIFY_TOL)
    return CorrectnessVerdict(
        certified=certified,
        min_h=float(min_h),
        argmin=arg,
        counterexample=None if certified else arg,
        samples=int(pool.shape[0]),
        oracle=stats,
        wall_time_s=time.perf_counter() - t0,
    )
