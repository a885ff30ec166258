"""Interior and boundary feasibility checks over sampled manifold states."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from daecbf.errors import NoBoundarySamples
from daecbf.projection import BarrierSpec, ProjectedDynamics
from daecbf.verifier.lp import FarkasCertificate, lp_feasible_arrays, lp_minimize
from daecbf.verifier.sampling import (
    boundary_samples,
    in_box,
    manifold_samples,
    project_to_boundary,
    project_to_manifold,
    scalar_batch,
)
from daecbf.verifier.stacks import (
    DEFAULT_BOUNDARY_BAND,
    FeasibilityStack,
    StackKind,
    assemble_stack,
    stacks_batch,
)

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 4096
REFINE_ITERS = 25
WITNESS_TOL = 1e-8
MARGIN_CAP = 1e6


@dataclass(frozen=True)
class FeasibilityVerdict:
    kind: StackKind
    certified: bool
    samples: int
    worst_margin: float
    worst_x: np.ndarray | None
    counterexample: np.ndarray | None = None
    certificate: FarkasCertificate | None = None
    blocks: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    @property
    def verdict(self) -> str:
        return "Certified" if self.certified else "Violated"


def stack_margin(stack: FeasibilityStack) -> float:
    """Largest uniform slack t <= MARGIN_CAP of the inequality rows, equalities held exactly.

    Row i is tightened by t * |a_i|, so t is a distance in input space.  When
    even t -> -inf cannot help (a zero row with negative right side) the
    phase-one violation is returned as -(1 + violation).
    """
    a, r = stack.a_mat, stack.r_vec
    weights = np.linalg.norm(a, axis=1)
    for name, start, stop in stack.blocks:
        if name in ("lambda_minus", "lambda_plus"):
            weights[start:stop] = 0.0
    n = a.shape[1]
    a_ext = np.vstack([np.hstack([a, weights[:, None]]), np.eye(1, n + 1, n)])
    r_ext = np.concatenate([r, [MARGIN_CAP]])
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    sol = lp_minimize(a_ext, r_ext, cost)
    if sol is None:
        res = lp_feasible_arrays(a, r)
        return -(1.0 + res.violation)
    return float(sol[0][-1])


def _check_one(stack: FeasibilityStack):
    res = lp_feasible_arrays(stack.a_mat, stack.r_vec)
    if res.feasible:
        slack = stack.a_mat @ res.witness - stack.r_vec
        if np.max(slack, initial=-np.inf) > WITNESS_TOL * (1.0 + np.max(np.abs(stack.r_vec))):
            raise RuntimeError("LP witness fails its own constraints")
    return res, stack_margin(stack)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _samples(pd, spec, lo, hi, kind, n, seed, band):
    sys = pd.system
    if kind is StackKind.INTERIOR:
        pts = manifold_samples(sys, lo, hi, n, seed)
        return pts[scalar_batch(spec.b)(pts) > 0]
    pts = boundary_samples(sys, spec, lo, hi, n, seed)
    return pts[np.abs(scalar_batch(spec.b)(pts)) <= band]


def _reproject(pd, spec, x, kind):
    sys = pd.system
    if kind is StackKind.BOUNDARY:
        pts, ok = project_to_boundary(sys, spec, x[None])
    else:
        pts, ok = project_to_manifold(sys, x[None])
    return pts[0] if ok[0] else None


def _refine(pd, spec, x0, margin0, kind, lo, hi, band):
    """Projected finite-difference descent of the margin from ``x0``."""
    sys = pd.system

    def margin_at(x):
        if x is None or not in_box(x, lo, hi)[0]:
            return np.inf
        b = float(scalar_batch(spec.b)(x[None])[0])
        if kind is StackKind.INTERIOR and not b > 0:
            return np.inf
        try:
            return stack_margin(assemble_stack(pd, spec, x, kind, band))
        except (ValueError, ArithmeticError):
            return np.inf

    x, m = np.array(x0, dtype=float), float(margin0)
    span = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    step = 0.05 * span
    fd = 1e-6 * np.maximum(span, 1.0)
    for _ in range(REFINE_ITERS):
        if m < 0:
            break
        grad = np.zeros(sys.n_x)
        for i in range(sys.n_d):
            e = np.zeros(sys.n_x)
            e[i] = fd[i]
            mp = margin_at(_reproject(pd, spec, x + e, kind))
            grad[i] = (mp - m) / fd[i] if np.isfinite(mp) else 0.0
        norm = np.linalg.norm(grad / np.maximum(step, 1e-12))
        if norm == 0.0:
            break
        moved = False
        scale = step / norm
        for _ in range(8):
            cand = _reproject(pd, spec, x - scale * grad, kind)
            mc = margin_at(cand)
            if mc < m:
                x, m, moved = cand, mc, True
                break
            scale = scale / 2
        if not moved:
            step = step / 2
            if np.all(step < 1e-6 * span):
                break
    return x, m


def verify_feasibility(
    pd: ProjectedDynamics,
    spec: BarrierSpec,
    domain_box,
    kind=StackKind.INTERIOR,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    boundary_band: float = DEFAULT_BOUNDARY_BAND,
    threads: int | None = None,
) -> FeasibilityVerdict:
    """Sample M n {b > 0} or the boundary band, solve an LP per point, refine the worst."""
    t0 = time.perf_counter()
    kind = StackKind(kind)
    if kind is StackKind.FULL:
        raise ValueError("verify_feasibility checks Interior or Boundary stacks")
    if not boundary_band > 0:
        raise ValueError("boundary_band must be positive")
    lo, hi = (np.asarray(v, dtype=float) for v in domain_box)
    threads = threads or os.cpu_count() or 1
    pts = _samples(pd, spec, lo, hi, kind, samples, seed, boundary_band)
    if pts.shape[0] == 0:
        if kind is StackKind.BOUNDARY:
            raise NoBoundarySamples("no sample reached the boundary band inside the box")
        raise NoBoundarySamples("no sample of the manifold has b > 0 inside the box")
    stacks = stacks_batch(pd, spec, pts, kind)
    results = _map(_check_one, stacks, threads)
    margins = np.array([m for _, m in results])
    feasible = np.array([r.feasible for r, _ in results])
    log.info("%s: %d samples, %d infeasible", kind.value, pts.shape[0], int((~feasible).sum()))

    if np.all(feasible):
        worst = int(np.argmin(margins))
        x_ref, m_ref = _refine(pd, spec, pts[worst], margins[worst], kind, lo, hi, boundary_band)
        if m_ref < margins[worst]:
            refined = assemble_stack(pd, spec, x_ref, kind, boundary_band)
            res = lp_feasible_arrays(refined.a_mat, refined.r_vec)
            if not res.feasible:
                pts = np.vstack([pts, x_ref])
                margins = np.append(margins, m_ref)
                feasible = np.append(feasible, False)
        if np.all(feasible):
            return FeasibilityVerdict(
                kind=kind,
                certified=True,
                samples=int(pts.shape[0]),
                worst_margin=float(min(m_ref, margins[worst])),
                worst_x=x_ref if m_ref < margins[worst] else pts[worst],
                wall_time_s=time.perf_counter() - t0,
            )

    bad = np.flatnonzero(~feasible)
    pick = int(bad[np.argmin(margins[bad])])
    x_ce = pts[pick]
    fresh = assemble_stack(pd, spec, x_ce, kind, boundary_band)
    res = lp_feasible_arrays(fresh.a_mat, fresh.r_vec)
    cert = res.certificate
    if res.feasible or cert is None or not cert.check(fresh.a_mat, fresh.r_vec):
        raise RuntimeError("Farkas certificate did not re-validate at the counterexample")
    return FeasibilityVerdict(
        kind=kind,
        certified=False,
        samples=int(pts.shape[0]),
        worst_margin=float(margins[pick]),
        worst_x=x_ce,
        counterexample=x_ce,
        certificate=cert,
        blocks={k: v.tolist() for k, v in fresh.partition(cert.lam).items()},
        wall_time_s=time.perf_counter() - t0,
    )

