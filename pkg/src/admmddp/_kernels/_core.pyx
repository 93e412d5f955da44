# Compiled hot kernels: the sequential backward recursion of the
# trajectory optimizer and the small dense active-set QP used by the
# per-timestep safety projections. Semantics mirror pyfallback.py.
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef int _chol(double* a, int n) noexcept nogil:
    """In-place lower Cholesky of the n x n row-major (tightly packed)
    matrix a. Returns 0 on success, -1 if not positive definite."""
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = a[j * n + j]
        for k in range(j):
            s -= a[j * n + k] * a[j * n + k]
        if s <= 0.0:
            return -1
        a[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = a[i * n + j]
            for k in range(j):
                s -= a[i * n + k] * a[j * n + k]
            a[i * n + j] = s / a[j * n + j]
    return 0


cdef void _chol_solve(double* l, double* rhs, int n, int m) noexcept nogil:
    """Solve (L L^T) X = RHS in place; RHS is n x m row-major."""
    cdef int i, j, c
    cdef double s
    for c in range(m):
        for i in range(n):
            s = rhs[i * m + c]
            for j in range(i):
                s -= l[i * n + j] * rhs[j * m + c]
            rhs[i * m + c] = s / l[i * n + i]
        for i in range(n - 1, -1, -1):
            s = rhs[i * m + c]
            for j in range(i + 1, n):
                s -= l[j * n + i] * rhs[j * m + c]
            rhs[i * m + c] = s / l[i * n + i]


def ilqr_backward(double[:, :, ::1] fx, double[:, :, ::1] fu,
                  double[::1] lrun,
                  double[:, ::1] lx, double[:, ::1] lu,
                  double[:, :, ::1] lxx, double[:, :, ::1] lxu,
                  double[:, :, ::1] luu,
                  double phi, double[::1] phix, double[:, ::1] phixx,
                  double reg):
    """Backward value recursion with first-order dynamics expansion.

    Returns (kff, Kfb, V, Vx, Vxx, d1, d2, fail_k, n_reg). fail_k is -1 on
    success, else the first timestep whose control Hessian stayed
    indefinite after adding reg * I. n_reg counts regularized steps.
    """
    cdef int K = fx.shape[0]
    cdef int p = fx.shape[1]
    cdef int q = fu.shape[2]
    cdef int k, i, j, m, fail_k = -1, n_reg = 0

    kff_arr = np.zeros((K, q))
    kfb_arr = np.zeros((K, q, p))
    v_arr = np.zeros(K + 1)
    vx_arr = np.zeros((K + 1, p))
    vxx_arr = np.zeros((K + 1, p, p))
    cdef double[:, ::1] kff = kff_arr
    cdef double[:, :, ::1] kfb = kfb_arr
    cdef double[::1] v = v_arr
    cdef double[:, ::1] vx = vx_arr
    cdef double[:, :, ::1] vxx = vxx_arr

    cdef double[:, ::1] vf = np.zeros((p, p))     # Vxx_{k+1} fx
    cdef double[:, ::1] vg = np.zeros((p, q))     # Vxx_{k+1} fu
    cdef double[:, ::1] qxx = np.zeros((p, p))
    cdef double[:, ::1] qxu = np.zeros((p, q))
    cdef double[:, ::1] quu = np.zeros((q, q))
    cdef double[:, ::1] low = np.zeros((q, q))    # Cholesky factor
    cdef double[::1] qu = np.zeros(q)
    cdef double[::1] quk = np.zeros(q)            # Quu kff + Qu
    cdef double[:, ::1] qukfb = np.zeros((q, p))  # Quu Kfb
    cdef double[:, ::1] rhs = np.zeros((q, p + 1))
    cdef double d1 = 0.0, d2 = 0.0, s, dv1, dv2

    v[K] = phi
    for i in range(p):
        vx[K, i] = phix[i]
        for j in range(p):
            vxx[K, i, j] = phixx[i, j]

    with nogil:
        for k in range(K - 1, -1, -1):
            for i in range(p):
                for j in range(p):
                    s = 0.0
                    for m in range(p):
                        s += vxx[k + 1, i, m] * fx[k, m, j]
                    vf[i, j] = s
                for j in range(q):
                    s = 0.0
                    for m in range(p):
                        s += vxx[k + 1, i, m] * fu[k, m, j]
                    vg[i, j] = s
            for i in range(p):
                for j in range(p):
                    s = lxx[k, i, j]
                    for m in range(p):
                        s += fx[k, m, i] * vf[m, j]
                    qxx[i, j] = s
                for j in range(q):
                    s = lxu[k, i, j]
                    for m in range(p):
                        s += fx[k, m, i] * vg[m, j]
                    qxu[i, j] = s
            for i in range(q):
                for j in range(q):
                    s = luu[k, i, j]
                    for m in range(p):
                        s += fu[k, m, i] * vg[m, j]
                    quu[i, j] = s
            # Qx into vx[k] (finished below), Qu kept aside
            for i in range(p):
                s = lx[k, i]
                for m in range(p):
                    s += fx[k, m, i] * vx[k + 1, m]
                vx[k, i] = s
            for i in range(q):
                s = lu[k, i]
                for m in range(p):
                    s += fu[k, m, i] * vx[k + 1, m]
                qu[i] = s

            # factor Quu; on failure retry once with reg * I added
            for i in range(q):
                for j in range(q):
                    low[i, j] = quu[i, j]
            if _chol(&low[0, 0], q) != 0:
                for i in range(q):
                    for j in range(q):
                        low[i, j] = quu[i, j]
                    low[i, i] += reg
                if _chol(&low[0, 0], q) != 0:
                    fail_k = k
                    break
                for i in range(q):
                    quu[i, i] += reg
                n_reg += 1

            # rhs = [Qux | Qu]; solve Quu X = rhs; negate -> [Kfb | kff]
            for i in range(q):
                for j in range(p):
                    rhs[i, j] = qxu[j, i]
                rhs[i, p] = qu[i]
            _chol_solve(&low[0, 0], &rhs[0, 0], q, p + 1)
            for i in range(q):
                kff[k, i] = -rhs[i, p]
                for j in range(p):
                    kfb[k, i, j] = -rhs[i, j]

            # dv1 = Qu^T kff ; dv2 = kff^T Quu kff (damped Quu when damped)
            dv1 = 0.0
            dv2 = 0.0
            for i in range(q):
                dv1 += qu[i] * kff[k, i]
                s = 0.0
                for j in range(q):
                    s += quu[i, j] * kff[k, j]
                quk[i] = s + qu[i]
                dv2 += kff[k, i] * s
            d1 += dv1
            d2 += dv2
            v[k] = lrun[k] + v[k + 1] + dv1 + 0.5 * dv2

            # Vx[k] = Qx + Kfb^T (Quu kff + Qu) + Qxu kff
            for i in range(p):
                s = vx[k, i]
                for j in range(q):
                    s += kfb[k, j, i] * quk[j] + qxu[i, j] * kff[k, j]
                vx[k, i] = s

            # Vxx[k] = Qxx + Kfb^T Quu Kfb + Kfb^T Qux + Qxu Kfb, symmetrized
            for i in range(q):
                for j in range(p):
                    s = 0.0
                    for m in range(q):
                        s += quu[i, m] * kfb[k, m, j]
                    qukfb[i, j] = s
            for i in range(p):
                for j in range(p):
                    s = qxx[i, j]
                    for m in range(q):
                        s += (kfb[k, m, i] * qukfb[m, j]
                              + kfb[k, m, i] * qxu[j, m]
                              + qxu[i, m] * kfb[k, m, j])
                    vxx[k, i, j] = s
            for i in range(p):
                for j in range(i + 1, p):
                    s = 0.5 * (vxx[k, i, j] + vxx[k, j, i])
                    vxx[k, i, j] = s
                    vxx[k, j, i] = s

    return kff_arr, kfb_arr, v_arr, vx_arr, vxx_arr, d1, d2, fail_k, n_reg


cdef int _gauss_solve(double* a, double* rhs, int n) noexcept nogil:
    """Solve the n x n system in place with partial pivoting.

    Returns 0 on success, -1 if (numerically) singular.
    """
    cdef int i, j, k, piv
    cdef double best, factor, tmp
    for k in range(n):
        piv = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > best:
                best = fabs(a[i * n + k])
                piv = i
        if best < 1e-13:
            return -1
        if piv != k:
            for j in range(n):
                tmp = a[k * n + j]
                a[k * n + j] = a[piv * n + j]
                a[piv * n + j] = tmp
            tmp = rhs[k]
            rhs[k] = rhs[piv]
            rhs[piv] = tmp
        for i in range(k + 1, n):
            factor = a[i * n + k] / a[k * n + k]
            for j in range(k, n):
                a[i * n + j] -= factor * a[k * n + j]
            rhs[i] -= factor * rhs[k]
    for i in range(n - 1, -1, -1):
        tmp = rhs[i]
        for j in range(i + 1, n):
            tmp -= a[i * n + j] * rhs[j]
        rhs[i] = tmp / a[i * n + i]
    return 0


def diag_qp(double[::1] w, double[::1] t, double[:, ::1] A, double[::1] b,
            double feas_tol=1e-9):
    """Minimize 0.5 (x-t)^T diag(w) (x-t) subject to A x <= b.

    Dual active-set iteration (finite for strictly convex problems):
    starting from the unconstrained optimum, the most violated row is
    driven feasible along the H-metric projection direction, dropping
    blocking active rows as their multipliers hit zero.

    Returns (x, status): status 0 = optimal, 1 = not solved (infeasible
    row set; caller falls back to a relaxed solve).
    """
    cdef int n = w.shape[0]
    cdef int m = A.shape[0]
    cdef int maxit = 50 * (m + 1)
    cdef int i, j, r, it, inner, na = 0, p, drop, status = 1, fail, added
    cdef double s, vmax, viol, nz, step, step_drop, step_full, u_plus

    x_arr = np.array(t, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    if m == 0:
        return x_arr, 0
    act_arr = np.zeros(m, dtype=np.intp)
    cdef Py_ssize_t[::1] act = act_arr
    cdef double[::1] duals = np.zeros(m)
    cdef double[::1] g = np.zeros(m * m)   # tightly packed na x na system
    cdef double[::1] rr = np.zeros(m)      # dual step direction
    cdef double[::1] z = np.zeros(n)       # primal step direction

    cdef double vall
    with nogil:
        for it in range(maxit):
            # most violated inactive row; optimality needs ALL rows feasible
            vall = 0.0
            vmax = feas_tol
            p = -1
            for i in range(m):
                s = -b[i]
                for r in range(n):
                    s += A[i, r] * x[r]
                if s > vall:
                    vall = s
                drop = 0
                for j in range(na):
                    if act[j] == i:
                        drop = 1
                        break
                if drop:
                    continue
                if s > vmax:
                    vmax = s
                    p = i
            if vall <= feas_tol:
                status = 0
                break
            if p < 0:
                status = 1  # only active rows violated (drift): cannot improve
                break

            u_plus = 0.0
            fail = 0
            added = 0
            for inner in range(maxit):
                # rr = (Na W^-1 Na^T)^-1 Na W^-1 a_p ; z = W^-1 (a_p - Na^T rr)
                if na > 0:
                    for i in range(na):
                        for j in range(na):
                            s = 0.0
                            for r in range(n):
                                s += A[act[i], r] * A[act[j], r] / w[r]
                            g[i * na + j] = s
                        s = 0.0
                        for r in range(n):
                            s += A[act[i], r] * A[p, r] / w[r]
                        rr[i] = s
                    if _gauss_solve(&g[0], &rr[0], na) != 0:
                        fail = 1
                        break
                for r in range(n):
                    s = A[p, r]
                    for i in range(na):
                        s -= A[act[i], r] * rr[i]
                    z[r] = s / w[r]
                nz = 0.0
                viol = -b[p]
                for r in range(n):
                    nz += A[p, r] * z[r]
                    viol += A[p, r] * x[r]

                step_drop = 1e300
                drop = -1
                for j in range(na):
                    if rr[j] > 1e-13 and duals[j] / rr[j] < step_drop:
                        step_drop = duals[j] / rr[j]
                        drop = j
                step_full = viol / nz if nz > 1e-13 else 1e300
                if step_drop >= 1e300 and step_full >= 1e300:
                    fail = 1  # row p cannot be satisfied: infeasible set
                    break
                step = step_drop if step_drop < step_full else step_full
                if nz > 1e-13:
                    for r in range(n):
                        x[r] -= step * z[r]
                for j in range(na):
                    duals[j] -= step * rr[j]
                u_plus += step
                if step_full <= step_drop:
                    act[na] = p
                    duals[na] = u_plus
                    na += 1
                    added = 1
                    break
                for j in range(drop, na - 1):
                    act[j] = act[j + 1]
                    duals[j] = duals[j + 1]
                na -= 1
            if fail == 1 or added == 0:
                status = 1
                break

    return x_arr, status
