"""Dense simplex for small inequality systems ``A u <= r`` with free ``u``.

Phase 1 minimises the total violation ``sum(s)`` subject to ``A u - s <= r``;
its dual yields a Farkas multiplier when the optimum is positive.  Phase 2
(used by the margin LP) minimises a linear cost over the feasible set.
Bland's rule fixes the pivot order, so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from daecbf.errors import MaxIterations

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class FarkasCertificate:
    """lambda >= 0 with lambda^T A = 0 and lambda^T r = -1."""

    lam: np.ndarray
    residual_eq: float
    value: float

    def check(self, a_mat, r_vec, tol: float = 1e-8) -> bool:
        a_mat = np.asarray(a_mat, dtype=float)
        lam = self.lam
        return bool(
            np.all(lam >= 0)
            and np.max(np.abs(lam @ a_mat), initial=0.0) <= tol
            and lam @ np.asarray(r_vec, dtype=float) < 0
        )

    def to_dict(self):
        return {
            "lambda": self.lam.tolist(),
            "residual_eq": self.residual_eq,
            "value": self.value,
        }


@dataclass(frozen=True)
class LpResult:
    feasible: bool
    witness: np.ndarray | None = None
    certificate: FarkasCertificate | None = None
    violation: float = 0.0


class _Tableau:
    """Equality-form tableau over columns [u+ (n), u- (n), w (m), s (m)]."""

    def __init__(self, a_mat, r_vec):
        m, n = a_mat.shape
        self.m, self.n = m, n
        sign = np.where(r_vec < 0, -1.0, 1.0)
        eye = np.eye(m)
        # row i:  sign_i * (A_i u+ - A_i u- + w_i - s_i) = sign_i * r_i  (rhs >= 0)
        self.mat = sign[:, None] * np.hstack([a_mat, -a_mat, eye, -eye])
        self.orig = self.mat.copy()
        self.rhs = sign * r_vec
        self.sign = sign
        self.n_cols = 2 * n + 2 * m
        self.art = np.zeros(self.n_cols, dtype=bool)
        self.art[2 * n + m:] = True
        # w_i is basic where r_i >= 0, s_i otherwise: both have +1 in row i.
        self.basis = np.where(sign > 0, 2 * n + np.arange(m), 2 * n + m + np.arange(m))
        self.rows = np.arange(m)
        self.allowed = np.ones(self.n_cols, dtype=bool)

    def pivot(self, row, col):
        self.rhs[row] /= self.mat[row, col]
        self.mat[row] /= self.mat[row, col]
        for i in range(self.mat.shape[0]):
            if i != row and self.mat[i, col] != 0.0:
                f = self.mat[i, col]
                self.mat[i] -= f * self.mat[row]
                self.rhs[i] -= f * self.rhs[row]
        self.basis[row] = col

    def run(self, cost, max_iter):
        """Bland's-rule simplex on min cost^T z from the current basis."""
        for _ in range(max_iter):
            cb = cost[self.basis]
            reduced = cost - cb @ self.mat
            reduced[~self.allowed] = 0.0
            scale = 1.0 + np.max(np.abs(cost))
            candidates = np.flatnonzero(reduced < -PIVOT_TOL * scale)
            if candidates.size == 0:
                return
            col = candidates[0]
            column = self.mat[:, col]
            positive = column > PIVOT_TOL
            if not np.any(positive):
                raise ValueError("linear program is unbounded")
            ratios = np.full(column.shape, np.inf)
            ratios[positive] = self.rhs[positive] / column[positive]
            best = np.min(ratios)
            ties = np.flatnonzero(ratios <= best + 1e-14 * (1.0 + abs(best)))
            row = ties[np.argmin(self.basis[ties])]
            self.pivot(row, col)
        raise MaxIterations("simplex iteration cap reached")

    def primal(self):
        z = np.zeros(self.n_cols)
        z[self.basis] = self.rhs
        return z

    def drive_out_artificials(self):
        """After phase 1: pivot zero-level artificials out, drop redundant rows."""
        keep = []
        for row in range(self.mat.shape[0]):
            if self.art[self.basis[row]]:
                entries = np.abs(self.mat[row]) * ~self.art
                col = int(np.argmax(entries))
                if entries[col] > PIVOT_TOL:
                    self.pivot(row, col)
                    keep.append(row)
            else:
                keep.append(row)
        self.mat = self.mat[keep]
        self.rhs = self.rhs[keep]
        self.basis = self.basis[keep]
        self.allowed = ~self.art


def _prepare(a_mat, r_vec):
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=float))
    r_vec = np.atleast_1d(np.asarray(r_vec, dtype=float))
    if a_mat.shape[0] != r_vec.size:
        raise ValueError("A and r disagree on the row count")
    if not (np.all(np.isfinite(a_mat)) and np.all(np.isfinite(r_vec))):
        from daecbf.errors import NonFinite

        raise NonFinite("stack contains NaN or Inf")
    return a_mat, r_vec


def _phase1(a_mat, r_vec):
    tab = _Tableau(a_mat, r_vec)
    cost = np.where(tab.art, 1.0, 0.0)
    cap = 50 * (tab.n_cols + tab.m) + 100
    tab.run(cost, cap)
    z = tab.primal()
    violation = float(np.sum(z[tab.art]))
    return tab, violation


def _certificate(tab: _Tableau, a_mat, r_vec) -> FarkasCertificate | None:
    # Fresh dual solve B^T y = c_B on the original (sign-adjusted) columns.
    basis_cols = tab.orig[:, tab.basis]
    c_b = np.where(tab.art[tab.basis], 1.0, 0.0)
    y = np.linalg.lstsq(basis_cols.T, c_b, rcond=None)[0]
    lam = np.clip(-tab.sign * y, 0.0, None)
    value = float(lam @ r_vec)
    if not value < 0:
        return None
    lam = lam / -value
    return FarkasCertificate(
        lam=lam,
        residual_eq=float(np.max(np.abs(lam @ a_mat), initial=0.0)),
        value=float(lam @ r_vec),
    )


def lp_feasible_arrays(a_mat, r_vec) -> LpResult:
    a_mat, r_vec = _prepare(a_mat, r_vec)
    m, n = a_mat.shape
    if m == 0:
        return LpResult(True, witness=np.zeros(n))
    tab, violation = _phase1(a_mat, r_vec)
    z = tab.primal()
    u = z[:n] - z[n:2 * n]
    tol = FEAS_TOL * (1.0 + np.max(np.abs(r_vec)))
    if violation <= tol:
        return LpResult(True, witness=u, violation=violation)
    cert = _certificate(tab, a_mat, r_vec)
    # cert is None only if dual recovery fails numerically; the verdict stands.
    return LpResult(False, certificate=cert, violation=violation)


def lp_minimize(a_mat, r_vec, cost):
    """min cost^T u s.t. A u <= r (u free).  Returns (u, value) or None if infeasible."""
    a_mat, r_vec = _prepare(a_mat, r_vec)
    m, n = a_mat.shape
    cost = np.asarray(cost, dtype=float)
    tab, violation = _phase1(a_mat, r_vec)
    if violation > FEAS_TOL * (1.0 + np.max(np.abs(r_vec), initial=0.0)):
        return None
    tab.drive_out_artificials()
    full = np.zeros(tab.n_cols)
    full[:n] = cost
    full[n:2 * n] = -cost
    tab.run(full, 50 * (tab.n_cols + m) + 100)
    z = tab.primal()
    u = z[:n] - z[n:2 * n]
    return u, float(cost @ u)
