"""Pure-numpy implementations of the compiled kernels.

Selected at import time when the extension module is unavailable; also
importable directly for the backend benchmark. Signatures and return
conventions match ``_core`` exactly.
"""
import numpy as np


def _chol_or_none(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def ilqr_backward(fx, fu, lrun, lx, lu, lxx, lxu, luu, phi, phix, phixx, reg):
    """Backward value recursion with first-order dynamics expansion.

    Returns (kff, Kfb, V, Vx, Vxx, d1, d2, fail_k, n_reg). fail_k is -1 on
    success, else the first timestep whose control Hessian stayed
    indefinite after adding reg * I. n_reg counts regularized steps.
    """
    K, p, q = fx.shape[0], fx.shape[1], fu.shape[2]
    kff = np.zeros((K, q))
    kfb = np.zeros((K, q, p))
    v = np.zeros(K + 1)
    vx = np.zeros((K + 1, p))
    vxx = np.zeros((K + 1, p, p))
    v[K] = phi
    vx[K] = phix
    vxx[K] = phixx
    d1 = 0.0
    d2 = 0.0
    n_reg = 0

    for k in range(K - 1, -1, -1):
        a, bmat = fx[k], fu[k]
        vf = vxx[k + 1] @ a
        vg = vxx[k + 1] @ bmat
        qxx = lxx[k] + a.T @ vf
        qxu = lxu[k] + a.T @ vg
        quu = luu[k] + bmat.T @ vg
        qx = lx[k] + a.T @ vx[k + 1]
        qu = lu[k] + bmat.T @ vx[k + 1]

        low = _chol_or_none(quu)
        if low is None:
            quu = quu + reg * np.eye(q)
            low = _chol_or_none(quu)
            if low is None:
                return kff, kfb, v, vx, vxx, d1, d2, k, n_reg
            n_reg += 1

        rhs = np.concatenate([qxu.T, qu[:, None]], axis=1)
        sol = np.linalg.solve(quu, rhs)
        kfb[k] = -sol[:, :p]
        kff[k] = -sol[:, p]

        dv1 = float(qu @ kff[k])
        dv2 = float(kff[k] @ quu @ kff[k])
        d1 += dv1
        d2 += dv2
        v[k] = lrun[k] + v[k + 1] + dv1 + 0.5 * dv2
        vx[k] = qx + kfb[k].T @ (quu @ kff[k] + qu) + qxu @ kff[k]
        m = qxx + kfb[k].T @ quu @ kfb[k] + kfb[k].T @ qxu.T + qxu @ kfb[k]
        vxx[k] = 0.5 * (m + m.T)

    return kff, kfb, v, vx, vxx, d1, d2, -1, n_reg


def diag_qp(w, t, A, b, feas_tol=1e-9):
    """Minimize 0.5 (x-t)^T diag(w) (x-t) subject to A x <= b.

    Dual active-set iteration (finite for strictly convex problems):
    starting from the unconstrained optimum, the most violated row is
    driven feasible along the H-metric projection direction, dropping
    blocking active rows as their multipliers hit zero.

    Returns (x, status): status 0 = optimal, 1 = not solved (infeasible
    row set; caller falls back to a relaxed solve).
    """
    w = np.asarray(w, dtype=float)
    m = A.shape[0]
    x = np.array(t, dtype=float, copy=True)
    if m == 0:
        return x, 0
    winv = 1.0 / w
    active: list = []
    duals: list = []
    maxit = 50 * (m + 1)

    for _ in range(maxit):
        resid = A @ x - b
        if np.max(resid) <= feas_tol:
            return x, 0
        if active:
            resid = resid.copy()
            resid[active] = -np.inf
        p = int(np.argmax(resid))
        if resid[p] <= feas_tol:
            return x, 1  # only active rows violated (drift): cannot improve

        n = A[p]
        u_plus = 0.0  # accumulated multiplier of row p across inner steps
        # inner loop: drive row p feasible, dropping blockers as needed
        for _ in range(maxit):
            if active:
                Na = A[active]
                G = (Na * winv) @ Na.T
                try:
                    r = np.linalg.solve(G, (Na * winv) @ n)
                except np.linalg.LinAlgError:
                    return x, 1
                z = winv * (n - Na.T @ r)
            else:
                r = np.zeros(0)
                z = winv * n
            nz = float(n @ z)  # = z' H z >= 0
            viol = float(n @ x - b[p])

            step_drop = np.inf
            drop_idx = -1
            for j, rj in enumerate(r):
                if rj > 1e-13 and duals[j] / rj < step_drop:
                    step_drop = duals[j] / rj
                    drop_idx = j
            step_full = viol / nz if nz > 1e-13 else np.inf

            if not np.isfinite(min(step_drop, step_full)):
                return x, 1  # row p cannot be satisfied: infeasible set
            step = min(step_drop, step_full)
            if nz > 1e-13:
                x = x - step * z
            for j in range(len(duals)):
                duals[j] -= step * r[j]
            u_plus += step
            if step_full <= step_drop:
                active.append(p)
                duals.append(u_plus)
                break
            active.pop(drop_idx)
            duals.pop(drop_idx)

    return x, 1
