"""Small dense linear-program solver (two-phase revised simplex).

Intended for the inner model-fitting LPs, which have at most a few hundred
variables and constraints.  The implementation favors robustness over
speed: a dense basis inverse refreshed periodically through LU-factorized
solves, Bland's pivoting rule throughout (so degenerate problems terminate),
and a single feasibility/optimality tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_REFRESH_EVERY = 64


@dataclass
class DenseLP:
    """minimize c @ x  subject to  a_ub @ x <= b_ub,  a_eq @ x = b_eq,
    lb <= x <= ub (default bounds are [0, inf))."""

    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def normalized(self):
        c = np.asarray(self.c, dtype=np.float64).ravel()
        n = c.size

        def mat(a, b, what):
            if a is None or np.size(a) == 0:
                return np.zeros((0, n)), np.zeros(0)
            a = np.asarray(a, dtype=np.float64).reshape(-1, n) if np.ndim(a) <= 2 else None
            if a is None:
                raise ValueError(f"{what} matrix must be 2-dimensional")
            b = np.asarray(b, dtype=np.float64).ravel()
            if a.shape[0] != b.size:
                raise ValueError(f"{what}: matrix has {a.shape[0]} rows but rhs has {b.size}")
            return a, b

        a_ub, b_ub = mat(self.a_ub, self.b_ub, "a_ub")
        a_eq, b_eq = mat(self.a_eq, self.b_eq, "a_eq")
        lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=np.float64).ravel()
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=np.float64).ravel()
        if lb.size != n or ub.size != n:
            raise ValueError("bounds must match the number of variables")
        if np.any(lb > ub):
            raise ValueError("bounds must satisfy lb <= ub")
        return c, a_ub, b_ub, a_eq, b_eq, lb, ub


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int

    @property
    def is_optimal(self):
        return self.status == OPTIMAL


def solve_lp(lp: DenseLP, tol: float = 1e-9, max_iter: int | None = None) -> LPResult:
    """Solve a dense LP; returns an optimal basic solution within ``tol``."""
    c, a_ub, b_ub, a_eq, b_eq, lb, ub = lp.normalized()
    n = c.size

    # Shift finite lower bounds to zero and split free variables into
    # positive and negative parts; finite upper bounds become <= rows.
    shift = np.where(np.isfinite(lb), lb, 0.0)
    free = ~np.isfinite(lb)
    col_of = np.arange(n)
    neg_col = np.full(n, -1)
    n_cols = n + int(free.sum())
    neg_col[free] = n + np.arange(int(free.sum()))

    def expand(a):
        if a.shape[0] == 0:
            return np.zeros((0, n_cols))
        out = np.zeros((a.shape[0], n_cols))
        out[:, :n] = a
        if free.any():
            out[:, n:] = -a[:, free]
        return out

    b_ub = b_ub - a_ub @ shift
    b_eq = b_eq - a_eq @ shift
    ub_rows = []
    ub_rhs = []
    for j in np.flatnonzero(np.isfinite(ub)):
        row = np.zeros(n_cols)
        row[col_of[j]] = 1.0
        if neg_col[j] >= 0:
            row[neg_col[j]] = -1.0
        ub_rows.append(row)
        ub_rhs.append(ub[j] - shift[j])
    a_ub_x = np.vstack([expand(a_ub)] + [r.reshape(1, -1) for r in ub_rows]) if ub_rows else expand(a_ub)
    b_ub_x = np.concatenate([b_ub, np.asarray(ub_rhs)]) if ub_rhs else b_ub
    a_eq_x = expand(a_eq)

    c_x = np.zeros(n_cols)
    c_x[:n] = c
    if free.any():
        c_x[neg_col[free]] = -c[free]

    n_slack = a_ub_x.shape[0]
    m = n_slack + a_eq_x.shape[0]
    a = np.zeros((m, n_cols + n_slack))
    a[:n_slack, :n_cols] = a_ub_x
    a[:n_slack, n_cols:] = np.eye(n_slack)
    a[n_slack:, :n_cols] = a_eq_x
    b = np.concatenate([b_ub_x, b_eq])

    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    x, iters, status = _two_phase(a, b, np.concatenate([c_x, np.zeros(n_slack)]), tol, max_iter)
    if status != OPTIMAL:
        return LPResult(status, None, None, iters)

    sol = x[:n].copy()
    if free.any():
        sol[free] -= x[neg_col[free]]
    sol += shift
    return LPResult(OPTIMAL, sol, float(c @ sol), iters)


def _two_phase(a, b, c, tol, max_iter):
    m, n = a.shape
    if max_iter is None:
        max_iter = 5000 + 50 * (m + n)

    # Phase I: artificial basis, minimize infeasibility.
    a1 = np.hstack([a, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    x, basis, iters1, status = _revised_simplex(a1, b, c1, basis, tol, max_iter)
    if status == UNBOUNDED:  # phase-I objective is bounded below by 0
        return None, iters1, INFEASIBLE
    if float(c1 @ x) > np.sqrt(tol):
        return None, iters1, INFEASIBLE

    keep = _drive_out_artificials(a1, basis, n, tol)
    a2 = a[keep]
    b2 = b[keep]
    basis = [basis[i] for i in keep]
    if any(j >= n for j in basis):
        basis = _complete_basis(a2, [j for j in basis if j < n], tol)
    x2, basis, iters2, status = _revised_simplex(a2, b2, c[:n], basis, tol, max_iter)
    if status != OPTIMAL:
        return None, iters1 + iters2, status
    return x2, iters1 + iters2, OPTIMAL


def _drive_out_artificials(a1, basis, n, tol):
    """Pivot artificial variables out of the basis; report rows to keep."""
    m = a1.shape[0]
    keep = list(range(m))
    for row in range(m):
        if basis[row] < n:
            continue
        b_inv = np.linalg.inv(a1[:, basis])
        tableau_row = b_inv[row] @ a1[:, :n]
        candidates = np.flatnonzero(np.abs(tableau_row) > np.sqrt(tol))
        candidates = [j for j in candidates if j not in set(basis)]
        if candidates:
            basis[row] = int(candidates[0])
        else:
            keep.remove(row)
    return keep


def _complete_basis(a, partial, tol):
    """Extend a partial column set to a full basis of ``a`` (rows are independent)."""
    m = a.shape[0]
    basis = list(partial)
    for j in range(a.shape[1]):
        if len(basis) == m:
            break
        if j in basis:
            continue
        trial = basis + [j]
        if np.linalg.matrix_rank(a[:, trial], tol=np.sqrt(tol)) == len(trial):
            basis = trial
    if len(basis) != m:
        raise RuntimeError("failed to rebuild a basis after removing redundant rows")
    return basis


def _revised_simplex(a, b, c, basis, tol, max_iter):
    """Primal revised simplex with Bland's rule from a basic feasible start."""
    m, n = a.shape
    basis = list(basis)
    b_inv = np.linalg.inv(a[:, basis])
    xb = np.maximum(b_inv @ b, 0.0)
    iters = 0
    while iters < max_iter:
        iters += 1
        if iters % _REFRESH_EVERY == 0:
            b_inv = np.linalg.inv(a[:, basis])
            xb = np.maximum(b_inv @ b, 0.0)
        y = c[basis] @ b_inv
        reduced = c - y @ a
        in_basis = np.zeros(n, dtype=bool)
        in_basis[basis] = True
        entering_candidates = np.flatnonzero((reduced < -tol) & ~in_basis)
        if entering_candidates.size == 0:
            x = np.zeros(n)
            x[basis] = np.maximum(xb, 0.0)
            return x, basis, iters, OPTIMAL
        j = int(entering_candidates[0])  # Bland: lowest variable index
        d = b_inv @ a[:, j]
        pos = d > tol
        if not pos.any():
            return None, basis, iters, UNBOUNDED
        ratios = np.full(m, np.inf)
        ratios[pos] = xb[pos] / d[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol)
        leave = int(min(ties, key=lambda i: basis[i]))  # Bland on leaving variable
        theta = ratios[leave]
        xb = np.maximum(xb - theta * d, 0.0)
        xb[leave] = theta
        # Product-form (eta) update of the basis inverse.
        pivot = d[leave]
        eta = -d / pivot
        eta[leave] = 1.0 / pivot - 1.0
        b_inv = b_inv + np.outer(eta, b_inv[leave])
        basis[leave] = j
    raise RuntimeError(f"simplex did not converge within {max_iter} iterations")
