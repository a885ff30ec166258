"""Affine feasibility stacks A u <= r for the per-point verification LPs.

Row blocks, in order: lambda_minus (-E u <= -e), lambda_plus (E u <= e),
the CBF or tangency row (Full and Boundary only) and the input rows, where
E u = e are the compatibility rows of every level.  Zero compatibility rows
are kept so the block sizes stay fixed; they read 0 <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from daecbf.errors import OffManifold
from daecbf.numeric import check_finite
from daecbf.projection import BarrierSpec, ProjectedDynamics
from daecbf.verifier.lp import LpResult, lp_feasible_arrays

DEFAULT_BOUNDARY_BAND = 1e-3


class StackKind(str, Enum):
    FULL = "Full"
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class FeasibilityStack:
    a_mat: np.ndarray
    r_vec: np.ndarray
    kind: StackKind
    blocks: tuple  # ((name, start, stop), ...)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        r = np.atleast_1d(np.asarray(self.r_vec, dtype=float))
        if a.shape[0] != r.size:
            raise ValueError("a_mat rows must match r_vec length")
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "r_vec", r)
        object.__setattr__(self, "kind", StackKind(self.kind))

    @property
    def n_rows(self) -> int:
        return self.r_vec.size

    def partition(self, lam) -> dict:
        """Split a multiplier vector into its named blocks."""
        lam = np.asarray(lam, dtype=float)
        return {name: lam[start:stop] for name, start, stop in self.blocks}


def _blocks(n_compat: int, has_cbf: bool, n_input: int):
    out, pos = [], 0
    for name, size in (
        ("lambda_minus", n_compat),
        ("lambda_plus", n_compat),
        ("lambda_b", 1 if has_cbf else 0),
        ("lambda_u", n_input),
    ):
        if size or name != "lambda_b":
            out.append((name, pos, pos + size))
        pos += size
    return tuple(out)


def stack_from_terms(sys, spec: BarrierSpec, e_mat, e_vec, psis, a_row, c_const, kind):
    """Build the stack from already evaluated compatibility and barrier terms."""
    kind = StackKind(kind)
    a_u, r_u = sys.input_bounds()
    e_mat = np.asarray(e_mat, dtype=float).reshape(-1, sys.n_u)
    e_vec = np.asarray(e_vec, dtype=float).reshape(-1)
    rows = [-e_mat, e_mat]
    rhs = [-e_vec, e_vec]
    if kind is not StackKind.INTERIOR:
        a_row = np.asarray(a_row, dtype=float).reshape(1, sys.n_u)
        c = float(c_const)
        if kind is StackKind.BOUNDARY:
            c -= spec.alphas[-1] * float(np.asarray(psis)[-1])
        rows.append(-a_row)
        rhs.append(np.array([c]))
    rows.append(a_u)
    rhs.append(r_u)
    return FeasibilityStack(
        a_mat=np.vstack(rows),
        r_vec=np.concatenate(rhs),
        kind=kind,
        blocks=_blocks(e_vec.size, kind is not StackKind.INTERIOR, r_u.size),
    )


def assemble_stack(
    pd: ProjectedDynamics,
    spec: BarrierSpec,
    x,
    kind=StackKind.FULL,
    boundary_band: float = DEFAULT_BOUNDARY_BAND,
) -> FeasibilityStack:
    x = check_finite(np.asarray(x, dtype=float), "state")
    kind = StackKind(kind)
    res, e_mat, e_vec, psis, a_row, c_const = pd.qp_terms(spec)(x)
    if not float(res) <= pd.manifold_tol:
        raise OffManifold(f"|phi(x)| = {float(res):.3e} exceeds manifold_tol {pd.manifold_tol:g}")
    psis = np.asarray(psis)
    if kind is StackKind.BOUNDARY and not abs(psis[0]) <= boundary_band:
        raise ValueError(f"|b(x)| = {abs(psis[0]):.3e} is outside the boundary band")
    return stack_from_terms(pd.system, spec, e_mat, e_vec, psis, a_row, c_const, kind)


def stacks_batch(pd: ProjectedDynamics, spec: BarrierSpec, xs, kind):
    """Stacks at many states with a single compiled evaluation (no band check)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] == 0:
        return []
    _, e_mat, e_vec, psis, a_row, c_const = (
        np.asarray(v) for v in pd.qp_terms_batch(spec)(xs)
    )
    return [
        stack_from_terms(pd.system, spec, e_mat[i], e_vec[i], psis[i], a_row[i], c_const[i], kind)
        for i in range(xs.shape[0])
    ]


def lp_feasible(stack: FeasibilityStack) -> LpResult:
    """Feasible(witness) or Infeasible(FarkasCertificate) for ``stack``."""
    check_finite(stack.a_mat, "stack matrix")
    check_finite(stack.r_vec, "stack vector")
    return lp_feasible_arrays(stack.a_mat, stack.r_vec)
