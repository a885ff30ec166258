"""Seeded Sobol sampling of a box and Newton projection onto M or onto dD n M."""

from __future__ import annotations

import jax
import jax.numpy as jnp
import numpy as np
from scipy.stats import qmc

from daecbf.dae import DaeSystem
from daecbf.projection import BarrierSpec

NEWTON_ITERS = 40
PROJECT_TOL = 1e-10
CHUNK = 65536


def sobol_box(lo, hi, n: int, seed: int) -> np.ndarray:
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    sampler = qmc.Sobol(d=lo.size, scramble=True, seed=seed)
    m = max(int(np.ceil(np.log2(max(n, 1)))), 0)
    pts = sampler.random_base2(m)[:n]
    return qmc.scale(pts, lo, hi)


def _newton_batch(residual, free_mask):
    """Vectorised min-norm Newton on ``residual`` over the coordinates in ``free_mask``.

    The step is J^T (J J^T)^-1 r, the plain Newton step when J is square.
    """
    idx = np.flatnonzero(free_mask)

    def solve(x):
        def body(state):
            it, z, _ = state
            r = residual(z)
            jac = jax.jacfwd(residual)(z)[:, idx]
            step = jac.T @ jnp.linalg.solve(jac @ jac.T, r)
            z = z.at[idx].add(-step)
            return it + 1, z, jnp.max(jnp.abs(residual(z)))

        def cond(state):
            it, _, res = state
            return (it < NEWTON_ITERS) & (res > 0.01 * PROJECT_TOL)

        res0 = jnp.max(jnp.abs(residual(x)))
        _, z, res = jax.lax.while_loop(cond, body, (0, x, res0))
        return z, res

    return jax.jit(jax.vmap(solve))


def run_chunked(fn, xs, chunk: int = CHUNK):
    """Apply a batched map in fixed-size chunks, padding the last one."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = xs.shape[0]
    if n <= chunk:
        out = fn(xs)
        return tuple(np.asarray(v) for v in out) if isinstance(out, tuple) else np.asarray(out)
    parts = []
    for start in range(0, n, chunk):
        block = xs[start:start + chunk]
        pad = chunk - block.shape[0]
        if pad:
            block = np.concatenate([block, np.repeat(block[-1:], pad, axis=0)])
        out = fn(block)
        if isinstance(out, tuple):
            parts.append(tuple(np.asarray(v)[: chunk - pad] for v in out))
        else:
            parts.append(np.asarray(out)[: chunk - pad])
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(col) for col in zip(*parts))
    return np.concatenate(parts)


def _converged(pts, res):
    return np.isfinite(res) & (res <= PROJECT_TOL) & np.all(np.isfinite(pts), axis=1)


_MANIFOLD_CACHE: dict = {}


def project_to_manifold(sys: DaeSystem, xs):
    """Re-solve x_a at each point with x_d held; returns (points, converged mask)."""
    fn = _MANIFOLD_CACHE.get(sys)
    if fn is None:
        mask = np.zeros(sys.n_x, dtype=bool)
        mask[sys.n_d:] = True
        fn = _newton_batch(sys.phi, mask)
        _MANIFOLD_CACHE[sys] = fn
    pts, res = run_chunked(fn, xs)
    return pts, _converged(pts, res)


_BOUNDARY_CACHE: dict = {}


def project_to_boundary(sys: DaeSystem, spec: BarrierSpec, xs):
    """Min-norm Newton on (phi, b) over all coordinates; returns (points, converged mask)."""
    key = (sys, spec)
    fn = _BOUNDARY_CACHE.get(key)
    if fn is None:

        def residual(x):
            return jnp.concatenate([sys.phi(x), jnp.atleast_1d(spec.b(x))])

        fn = _newton_batch(residual, np.ones(sys.n_x, dtype=bool))
        _BOUNDARY_CACHE[key] = fn
    pts, res = run_chunked(fn, xs)
    return pts, _converged(pts, res)


def in_box(xs, lo, hi, slack: float = 0.0):
    xs = np.atleast_2d(xs)
    return np.all((xs >= np.asarray(lo) - slack) & (xs <= np.asarray(hi) + slack), axis=1)


_SCALAR_CACHE: dict = {}


def scalar_batch(fn):
    """Compiled batched evaluation of a scalar state map."""
    out = _SCALAR_CACHE.get(fn)
    if out is None:
        out = jax.jit(jax.vmap(lambda x: jnp.reshape(fn(x), ())))
        _SCALAR_CACHE[fn] = out
    return lambda xs: run_chunked(out, xs)


def manifold_samples(sys: DaeSystem, lo, hi, n: int, seed: int):
    """Sobol points of the box projected onto M, keeping those that stay in the box."""
    raw = sobol_box(lo, hi, n, seed)
    pts, ok = project_to_manifold(sys, raw)
    return pts[ok & in_box(pts, lo, hi)]


def boundary_samples(sys: DaeSystem, spec: BarrierSpec, lo, hi, n: int, seed: int):
    """Sobol points of the box projected onto {phi = 0, b = 0}, kept if inside the box."""
    raw = sobol_box(lo, hi, n, seed)
    pts, ok = project_to_boundary(sys, spec, raw)
    return pts[ok & in_box(pts, lo, hi)]
