"""Small dense two-phase simplex.

The region programs have at most a few hundred variables, so a plain
tableau with Bland's anti-cycling rule is fast enough and keeps results
independent of any external solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    value: float = float("nan")


def _pivot(tab: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for r in range(tab.shape[0]):
        if r != row and tab[r, col] != 0.0:
            tab[r] -= tab[r, col] * tab[row]
    basis[row] = col


def _iterate(tab: np.ndarray, basis: list[int], allowed: int, tol: float, max_iter: int) -> str:
    """Maximize the objective stored in the last row as negated reduced costs."""
    m = tab.shape[0] - 1
    for _ in range(max_iter):
        obj = tab[-1, :allowed]
        entering = next((j for j in range(allowed) if obj[j] < -tol), -1)
        if entering < 0:
            return OPTIMAL
        col = tab[:m, entering]
        best = -1
        best_ratio = np.inf
        for r in range(m):
            if col[r] > tol:
                ratio = tab[r, -1] / col[r]
                if ratio < best_ratio - tol or (abs(ratio - best_ratio) <= tol and basis[r] < basis[best]):
                    best, best_ratio = r, ratio
        if best < 0:
            return UNBOUNDED
        _pivot(tab, basis, best, entering)
    raise RuntimeError("simplex iteration limit reached")


def linprog_max(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    tol: float = 1e-10,
    max_iter: int = 50_000,
) -> LPResult:
    """Maximize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: x | slacks (one per <= row) | artificials
    needs_art = [b_ub[r] < 0 for r in range(m_ub)] + [True] * m_eq
    n_art = sum(needs_art)
    width = n + m_ub + n_art
    tab = np.zeros((m + 1, width + 1))
    basis: list[int] = []
    art = n + m_ub
    for r in range(m_ub):
        sign = -1.0 if b_ub[r] < 0 else 1.0
        tab[r, :n] = sign * A_ub[r]
        tab[r, n + r] = sign
        tab[r, -1] = sign * b_ub[r]
        if needs_art[r]:
            tab[r, art] = 1.0
            basis.append(art)
            art += 1
        else:
            basis.append(n + r)
    for k in range(m_eq):
        r = m_ub + k
        sign = -1.0 if b_eq[k] < 0 else 1.0
        tab[r, :n] = sign * A_eq[k]
        tab[r, -1] = sign * b_eq[k]
        tab[r, art] = 1.0
        basis.append(art)
        art += 1

    if n_art:
        # phase one: maximize minus the sum of artificials
        tab[-1, :] = 0.0
        tab[-1, n + m_ub:width] = 1.0
        for r in range(m):
            if basis[r] >= n + m_ub:
                tab[-1] -= tab[r]
        _iterate(tab, basis, width, tol, max_iter)
        if -tab[-1, -1] > 1e-7 * max(1.0, np.abs(tab[:m, -1]).max(initial=0.0)):
            return LPResult(INFEASIBLE)
        # drive remaining artificials out of the basis; drop redundant rows
        keep = []
        for r in range(m):
            if basis[r] >= n + m_ub:
                cols = [j for j in range(n + m_ub) if abs(tab[r, j]) > tol]
                if cols:
                    _pivot(tab, basis, r, cols[0])
                    keep.append(r)
            else:
                keep.append(r)
        tab = np.vstack([np.hstack([tab[keep, : n + m_ub], tab[keep, -1:]]), np.zeros((1, n + m_ub + 1))])
        basis = [basis[r] for r in keep]
        m = len(keep)
        width = n + m_ub

    tab[-1, :] = 0.0
    tab[-1, :n] = -c
    for r in range(m):
        j = basis[r]
        if tab[-1, j] != 0.0:
            tab[-1] -= tab[-1, j] * tab[r]
    status = _iterate(tab, basis, width, tol, max_iter)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED)
    x = np.zeros(width)
    for r in range(m):
        x[basis[r]] = tab[r, -1]
    x = x[:n]
    return LPResult(OPTIMAL, x, float(c @ x))
