"""Diagonal-metric projection QPs for the per-timestep safety updates.

min 0.5 (v - t)' diag(w) (v - t)  s.t.  A v <= b

The active-set kernel handles the regular case; jointly infeasible row
sets (possible for transiently conflicting linearizations early in a
consensus run) fall back to a slack-relaxed least-violation solve and
are flagged to the caller.
"""
from __future__ import annotations

import numpy as np

from . import _kernels

FEAS_TOL = 1e-9
_RELAX_WEIGHT = 1e8


def solve_diag_qp(w, t, A, b):
    """Returns (v, clean). clean is False when the relaxed fallback ran."""
    w = np.ascontiguousarray(w, dtype=float)
    t = np.ascontiguousarray(t, dtype=float)
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if A.shape[0] == 0:
        return t.copy(), True
    v, status = _kernels.diag_qp(w, t, A, b, FEAS_TOL)
    if status == 0:
        return v, True
    return relaxed_least_violation(w, t, A, b), False


def relaxed_least_violation(w, t, A, b, iters: int = 60):
    """Minimize the target distance plus a heavy quadratic hinge on the
    violated rows; semismooth fixed-point iteration on the violated set."""
    v = t.copy()
    prev_mask = None
    for _ in range(iters):
        mask = (A @ v - b) > FEAS_TOL
        if prev_mask is not None and np.array_equal(mask, prev_mask):
            break
        prev_mask = mask
        if not np.any(mask):
            break
        Av = A[mask]
        H = np.diag(w) + _RELAX_WEIGHT * Av.T @ Av
        rhs = w * t + _RELAX_WEIGHT * Av.T @ b[mask]
        v = np.linalg.solve(H, rhs)
    return v


def box_rows(dim: int, indices, lower, upper):
    """Rows encoding lb <= v[indices] <= ub as A v <= b (finite bounds only)."""
    rows, offs = [], []
    for idx, lo, hi in zip(indices, lower, upper):
        if np.isfinite(lo):
            r = np.zeros(dim)
            r[idx] = -1.0
            rows.append(r)
            offs.append(-lo)
        if np.isfinite(hi):
            r = np.zeros(dim)
            r[idx] = 1.0
            rows.append(r)
            offs.append(hi)
    if not rows:
        return np.zeros((0, dim)), np.zeros(0)
    return np.stack(rows), np.asarray(offs)
