# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path engine for the built-in problems.

Mirrors :func:`stochdg._fallback.run_paths` for problems that carry a
``kernel_id``.  Each path is integrated independently in C, so the result of
a path does not depend on how paths are grouped.

Problem ids: 1 pendulum, 2 cyclic Lotka-Volterra, 3 quartic fixture.
Scheme ids: 0 conservative, 1 milstein, 2 euler_maruyama,
3 stochastic_midpoint, 4 composition (pairwise plan).
Discrete-gradient ids: 0 exact, 1 quadrature, 2 separable.
"""

import numpy as np

from libc.math cimport sin, cos, sqrt, fabs, cbrt, isfinite, INFINITY

cdef enum:
    MAXD = 3
    MAXQ = 16

cdef enum:
    ST_OK = 0
    ST_NONCONV = 1
    ST_DOMAIN = 2

cdef double LV_FLOOR = 1e-12
cdef double DBL_EPS = 2.220446049250313e-16

cdef struct Ctx:
    int prob
    int d
    int m
    double c[3]
    int scheme
    int dg
    int nq
    double qc[MAXQ]
    double qb[MAXQ]
    double sep_thresh
    double tol
    int maxit
    int newton
    # per-step data
    double h
    double dw[3]
    double x[3]
    int mi
    int mj


# -- problem primitives ------------------------------------------------------

cdef double inv_value(Ctx* c, const double* x) noexcept nogil:
    if c.prob == 1:
        return 0.5 * x[0] * x[0] - cos(x[1])
    if c.prob == 2:
        return x[0] * x[1] * x[2]
    return 0.25 * (x[0] * x[0] * x[0] * x[0] + x[1] * x[1] * x[1] * x[1])


cdef void grad(Ctx* c, const double* x, double* out) noexcept nogil:
    if c.prob == 1:
        out[0] = x[0]
        out[1] = sin(x[1])
    elif c.prob == 2:
        out[0] = x[1] * x[2]
        out[1] = x[0] * x[2]
        out[2] = x[0] * x[1]
    else:
        out[0] = x[0] * x[0] * x[0]
        out[1] = x[1] * x[1] * x[1]


cdef inline double sinc_half(double dq) noexcept nogil:
    # sin(dq/2)/(dq/2), series near zero
    cdef double t = 0.5 * dq
    if fabs(t) < 1e-4:
        return 1.0 - t * t / 6.0
    return sin(t) / t


cdef void exact_avg(Ctx* c, const double* x, const double* y, double* out) noexcept nogil:
    cdef int k
    if c.prob == 1:
        out[0] = 0.5 * (x[0] + y[0])
        out[1] = sin(0.5 * (x[1] + y[1])) * sinc_half(y[1] - x[1])
    elif c.prob == 2:
        out[0] = (2 * x[1] * x[2] + x[1] * y[2] + y[1] * x[2] + 2 * y[1] * y[2]) / 6.0
        out[1] = (2 * x[0] * x[2] + x[0] * y[2] + y[0] * x[2] + 2 * y[0] * y[2]) / 6.0
        out[2] = (2 * x[0] * x[1] + x[0] * y[1] + y[0] * x[1] + 2 * y[0] * y[1]) / 6.0
    else:
        for k in range(2):
            out[k] = 0.25 * (y[k] * y[k] * y[k] + y[k] * y[k] * x[k]
                             + y[k] * x[k] * x[k] + x[k] * x[k] * x[k])


cdef double sep_part(Ctx* c, int k, double u) noexcept nogil:
    if c.prob == 1:
        if k == 0:
            return 0.5 * u * u
        return -cos(u)
    return 0.25 * u * u * u * u


cdef double sep_der(Ctx* c, int k, double u) noexcept nogil:
    if c.prob == 1:
        if k == 0:
            return u
        return sin(u)
    return u * u * u


cdef void avg_grad(Ctx* c, const double* x, const double* y, double* out) noexcept nogil:
    cdef int k, i
    cdef double pt[MAXD]
    cdef double g[MAXD]
    cdef double diff, scale
    if c.dg == 0:
        exact_avg(c, x, y, out)
    elif c.dg == 1:
        for k in range(c.d):
            out[k] = 0.0
        for i in range(c.nq):
            for k in range(c.d):
                pt[k] = x[k] + c.qc[i] * (y[k] - x[k])
            grad(c, pt, g)
            for k in range(c.d):
                out[k] += c.qb[i] * g[k]
    else:
        for k in range(c.d):
            diff = y[k] - x[k]
            scale = fabs(x[k])
            if fabs(y[k]) > scale:
                scale = fabs(y[k])
            if scale < 1.0:
                scale = 1.0
            if fabs(diff) <= c.sep_thresh * scale:
                out[k] = sep_der(c, k, 0.5 * (x[k] + y[k]))
            else:
                out[k] = (sep_part(c, k, y[k]) - sep_part(c, k, x[k])) / diff


cdef void zero9(double* a) noexcept nogil:
    cdef int k
    for k in range(9):
        a[k] = 0.0


cdef void smat(Ctx* c, const double* x, double* a) noexcept nogil:
    # row-major d x d into a 3x3 buffer
    zero9(a)
    if c.prob == 1:
        a[0 * 3 + 1] = -1.0
        a[1 * 3 + 0] = 1.0
    elif c.prob == 2:
        a[0 * 3 + 1] = 1.0
        a[0 * 3 + 2] = -1.0
        a[1 * 3 + 2] = 1.0
        a[1 * 3 + 0] = -1.0
        a[2 * 3 + 0] = 1.0
        a[2 * 3 + 1] = -1.0
    else:
        a[0 * 3 + 1] = 1.0
        a[1 * 3 + 0] = -1.0


cdef double LV_T[3][3]
LV_T[0][:] = [1.0, 1.0, 3.0]
LV_T[1][:] = [1.0, 1.0, -3.0]
LV_T[2][:] = [-1.0, -3.0, 1.0]

cdef double LV_G[3][3]
LV_G[0][:] = [1.0, 1.0, -2.0]
LV_G[1][:] = [1.0, -2.0, 1.0]
LV_G[2][:] = [-2.0, 1.0, 1.0]


cdef int tmat(Ctx* c, int r, const double* x, double* a) noexcept nogil:
    cdef double v
    zero9(a)
    if c.prob == 1:
        v = -c.c[r] * cos(x[1])
        a[0 * 3 + 1] = v
        a[1 * 3 + 0] = -v
    elif c.prob == 2:
        if fabs(x[0]) <= LV_FLOOR or fabs(x[1]) <= LV_FLOOR or fabs(x[2]) <= LV_FLOOR:
            return ST_DOMAIN
        a[0 * 3 + 1] = LV_T[r][0] / (2.0 * x[2])
        a[0 * 3 + 2] = LV_T[r][1] / (2.0 * x[1])
        a[1 * 3 + 2] = LV_T[r][2] / (2.0 * x[0])
        a[1 * 3 + 0] = -a[0 * 3 + 1]
        a[2 * 3 + 0] = -a[0 * 3 + 2]
        a[2 * 3 + 1] = -a[1 * 3 + 2]
    else:
        a[0 * 3 + 1] = 0.2
        a[1 * 3 + 0] = -0.2
    return ST_OK


cdef void drift(Ctx* c, const double* x, double* out) noexcept nogil:
    if c.prob == 1:
        out[0] = -sin(x[1])
        out[1] = x[0]
    elif c.prob == 2:
        out[0] = x[0] * (x[2] - x[1])
        out[1] = x[1] * (x[0] - x[2])
        out[2] = x[2] * (x[1] - x[0])
    else:
        out[0] = x[1] * x[1] * x[1]
        out[1] = -x[0] * x[0] * x[0]


cdef void diff(Ctx* c, int r, const double* x, double* out) noexcept nogil:
    cdef int k
    cdef double cq
    if c.prob == 1:
        cq = cos(x[1])
        out[0] = c.c[r] * (-cq * sin(x[1]))
        out[1] = c.c[r] * (x[0] * cq)
    elif c.prob == 2:
        for k in range(3):
            out[k] = x[k] * LV_G[r][k]
    else:
        out[0] = 0.2 * x[1] * x[1] * x[1]
        out[1] = -0.2 * x[0] * x[0] * x[0]


cdef void diff_jac(Ctx* c, int r, const double* x, double* a) noexcept nogil:
    cdef int k
    zero9(a)
    if c.prob == 1:
        a[0 * 3 + 1] = -c.c[r] * cos(2.0 * x[1])
        a[1 * 3 + 0] = c.c[r] * cos(x[1])
        a[1 * 3 + 1] = -c.c[r] * x[0] * sin(x[1])
    elif c.prob == 2:
        for k in range(3):
            a[k * 3 + k] = LV_G[r][k]
    else:
        a[0 * 3 + 1] = 0.6 * x[1] * x[1]
        a[1 * 3 + 0] = -0.6 * x[0] * x[0]


cdef void matvec(int d, const double* a, const double* v, double* out) noexcept nogil:
    cdef int i, k
    for i in range(d):
        out[i] = a[i * 3] * v[0]
        for k in range(1, d):
            out[i] += a[i * 3 + k] * v[k]


cdef void apply_mask(Ctx* c, double* a) noexcept nogil:
    cdef double aij, aji
    if c.mi < 0:
        return
    aij = a[c.mi * 3 + c.mj]
    aji = a[c.mj * 3 + c.mi]
    zero9(a)
    a[c.mi * 3 + c.mj] = aij
    a[c.mj * 3 + c.mi] = aji


cdef int skew_operator(Ctx* c, const double* pt, double* amat) noexcept nogil:
    """h S(pt) + sum_r dw_r T_r(pt), masked to the active subsystem."""
    cdef double t[9]
    cdef int r, k, st
    smat(c, pt, amat)
    for k in range(9):
        amat[k] *= c.h
    for r in range(c.m):
        st = tmat(c, r, pt, t)
        if st != ST_OK:
            return st
        for k in range(9):
            amat[k] += c.dw[r] * t[k]
    apply_mask(c, amat)
    return ST_OK


# -- implicit maps -----------------------------------------------------------

cdef int update(Ctx* c, const double* z, double* out) noexcept nogil:
    cdef double mid[MAXD]
    cdef double dg[MAXD]
    cdef double amat[9]
    cdef double tmp[MAXD]
    cdef int k, r, st
    for k in range(c.d):
        mid[k] = 0.5 * (c.x[k] + z[k])
    if c.scheme == 3:
        drift(c, mid, tmp)
        for k in range(c.d):
            out[k] = c.x[k] + c.h * tmp[k]
        for r in range(c.m):
            diff(c, r, mid, tmp)
            for k in range(c.d):
                out[k] += c.dw[r] * tmp[k]
        return ST_OK
    avg_grad(c, c.x, z, dg)
    st = skew_operator(c, mid, amat)
    if st != ST_OK:
        return st
    matvec(c.d, amat, dg, tmp)
    for k in range(c.d):
        out[k] = c.x[k] + tmp[k]
    return ST_OK


cdef int predictor(Ctx* c, double* out) noexcept nogil:
    cdef double tmp[MAXD]
    cdef double g[MAXD]
    cdef double amat[9]
    cdef int k, r, st
    if c.scheme == 3:
        drift(c, c.x, tmp)
        for k in range(c.d):
            out[k] = c.x[k] + c.h * tmp[k]
        for r in range(c.m):
            diff(c, r, c.x, tmp)
            for k in range(c.d):
                out[k] += c.dw[r] * tmp[k]
        return ST_OK
    grad(c, c.x, g)
    st = skew_operator(c, c.x, amat)
    if st != ST_OK:
        return st
    matvec(c.d, amat, g, tmp)
    for k in range(c.d):
        out[k] = c.x[k] + tmp[k]
    return ST_OK


cdef double norm(int d, const double* v) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(d):
        s += v[k] * v[k]
    return sqrt(s)


cdef int fixed_point(Ctx* c, const double* start, double* z) noexcept nogil:
    cdef double nz[MAXD]
    cdef double dv[MAXD]
    cdef int it, k, st
    cdef double r
    for k in range(c.d):
        z[k] = start[k]
    for it in range(c.maxit):
        st = update(c, z, nz)
        if st != ST_OK:
            return st
        for k in range(c.d):
            dv[k] = nz[k] - z[k]
            z[k] = nz[k]
        r = norm(c.d, dv)
        if not isfinite(r):
            return ST_NONCONV
        if r <= c.tol:
            return ST_OK
    return ST_NONCONV


cdef int solve3(int d, double* a, double* b) noexcept nogil:
    """Gaussian elimination with partial pivoting on a row-major 3x3 buffer."""
    cdef int i, j, k, p
    cdef double piv, f, t
    for i in range(d):
        p = i
        for j in range(i + 1, d):
            if fabs(a[j * 3 + i]) > fabs(a[p * 3 + i]):
                p = j
        if a[p * 3 + i] == 0.0 or not isfinite(a[p * 3 + i]):
            return 1
        if p != i:
            for k in range(d):
                t = a[i * 3 + k]
                a[i * 3 + k] = a[p * 3 + k]
                a[p * 3 + k] = t
            t = b[i]
            b[i] = b[p]
            b[p] = t
        piv = a[i * 3 + i]
        for j in range(i + 1, d):
            f = a[j * 3 + i] / piv
            for k in range(i, d):
                a[j * 3 + k] -= f * a[i * 3 + k]
            b[j] -= f * b[i]
    for i in range(d - 1, -1, -1):
        t = b[i]
        for k in range(i + 1, d):
            t -= a[i * 3 + k] * b[k]
        b[i] = t / a[i * 3 + i]
    return 0


cdef int newton(Ctx* c, const double* start, double* z) noexcept nogil:
    cdef double fz[MAXD]
    cdef double res[MAXD]
    cdef double zp[MAXD]
    cdef double fp[MAXD]
    cdef double fm[MAXD]
    cdef double jac[9]
    cdef int it, k, j, st
    cdef double r, eps
    for k in range(c.d):
        z[k] = start[k]
    for it in range(c.maxit):
        st = update(c, z, fz)
        if st != ST_OK:
            return st
        for k in range(c.d):
            res[k] = fz[k] - z[k]
        r = norm(c.d, res)
        if not isfinite(r):
            return ST_NONCONV
        if r <= c.tol:
            for k in range(c.d):
                z[k] = fz[k]
            return ST_OK
        eps = norm(c.d, z)
        if eps < 1.0:
            eps = 1.0
        eps *= cbrt(DBL_EPS)
        for j in range(c.d):
            for k in range(c.d):
                zp[k] = z[k]
            zp[j] = z[j] + eps
            st = update(c, zp, fp)
            if st != ST_OK:
                return st
            zp[j] = z[j] - eps
            st = update(c, zp, fm)
            if st != ST_OK:
                return st
            for k in range(c.d):
                # d/dz_j of (update(z) - z)_k
                jac[k * 3 + j] = (fp[k] - fm[k]) / (2.0 * eps) - (1.0 if k == j else 0.0)
        for k in range(c.d):
            res[k] = -res[k]
        if solve3(c.d, jac, res):
            return ST_NONCONV
        for k in range(c.d):
            z[k] += res[k]
    return ST_NONCONV


cdef int implicit_step(Ctx* c, double* out) noexcept nogil:
    cdef double start[MAXD]
    cdef int st, k
    if c.h == 0.0:
        st = 1
        for k in range(c.m):
            if c.dw[k] != 0.0:
                st = 0
        if st:
            for k in range(c.d):
                out[k] = c.x[k]
            return ST_OK
    st = predictor(c, start)
    if st != ST_OK:
        return st
    st = fixed_point(c, start, out)
    if st == ST_OK or not c.newton:
        return st
    return newton(c, start, out)


cdef int explicit_step(Ctx* c, double* out) noexcept nogil:
    cdef double g[MAXD][MAXD]
    cdef double jac[MAXD][9]
    cdef double tmp[MAXD]
    cdef int i, r, k
    drift(c, c.x, tmp)
    for k in range(c.d):
        out[k] = c.x[k] + c.h * tmp[k]
    for r in range(c.m):
        diff(c, r, c.x, g[r])
        diff_jac(c, r, c.x, jac[r])
        for k in range(c.d):
            out[k] += c.dw[r] * g[r][k]
    if c.scheme == 2:
        for r in range(c.m):
            matvec(c.d, jac[r], g[r], tmp)
            for k in range(c.d):
                out[k] += 0.5 * c.h * tmp[k]
        return ST_OK
    for i in range(c.m):
        for r in range(i + 1, c.m):
            matvec(c.d, jac[r], g[i], tmp)
            for k in range(c.d):
                out[k] += c.dw[i] * c.dw[r] * tmp[k]
    for r in range(c.m):
        matvec(c.d, jac[r], g[r], tmp)
        for k in range(c.d):
            out[k] += 0.5 * c.dw[r] * c.dw[r] * tmp[k]
    return ST_OK


cdef int composition_step(Ctx* c, const double* h_full, const double* dw_full,
                          double* out) noexcept nogil:
    cdef int pi[3]
    cdef int pj[3]
    cdef int npair = 0
    cdef int i, j, s, k, idx, nsub, st
    cdef double lam
    cdef double y[MAXD]
    for i in range(c.d):
        for j in range(i + 1, c.d):
            pi[npair] = i
            pj[npair] = j
            npair += 1
    nsub = 2 * npair - 1
    for k in range(c.d):
        y[k] = c.x[k]
    for s in range(nsub):
        if s < npair - 1:
            idx = s
            lam = 0.5
        elif s == npair - 1:
            idx = s
            lam = 1.0
        else:
            idx = nsub - 1 - s
            lam = 0.5
        c.mi = pi[idx]
        c.mj = pj[idx]
        c.h = lam * h_full[0]
        for k in range(c.m):
            c.dw[k] = lam * dw_full[k]
        for k in range(c.d):
            c.x[k] = y[k]
        st = implicit_step(c, y)
        if st != ST_OK:
            return st
    c.mi = -1
    for k in range(c.d):
        out[k] = y[k]
    return ST_OK


cdef int in_domain(Ctx* c, const double* x) noexcept nogil:
    cdef int k
    for k in range(c.d):
        if not isfinite(x[k]):
            return 0
        if c.prob == 2 and x[k] <= LV_FLOOR:
            return 0
    return 1


def run_paths(int prob, double[::1] params, int scheme, int dg,
              double[::1] nodes, double[::1] weights,
              double[::1] x0, double h, double[:, :, ::1] increments,
              double abs_tol, int max_iterations, bint newton_fallback,
              double sep_threshold=1e-8):
    """Integrate every path of ``increments`` (shape ``(P, m, n)``).

    Returns ``(final, max_drift, step_sq, status)`` like the numpy engine.
    """
    cdef Ctx c
    cdef Py_ssize_t n_paths = increments.shape[0]
    cdef int m = increments.shape[1]
    cdef Py_ssize_t n_steps = increments.shape[2]
    cdef Py_ssize_t p, j
    cdef int k, st
    cdef double y[MAXD]
    cdef double hf
    cdef double dwf[MAXD]
    cdef double i0, cur, prev, dr

    if prob not in (1, 2, 3):
        raise ValueError(f"no compiled kernel for problem id {prob}")
    if nodes.shape[0] > MAXQ:
        raise ValueError("too many quadrature nodes for the compiled kernel")
    c.prob = prob
    c.d = 2 if prob != 2 else 3
    c.m = m
    for k in range(3):
        c.c[k] = params[k] if k < params.shape[0] else 0.0
    c.scheme = scheme
    c.dg = dg
    c.nq = nodes.shape[0]
    for k in range(c.nq):
        c.qc[k] = nodes[k]
        c.qb[k] = weights[k]
    c.sep_thresh = sep_threshold
    c.tol = abs_tol
    c.maxit = max_iterations
    c.newton = newton_fallback
    c.mi = -1
    c.mj = -1
    if x0.shape[0] != c.d:
        raise ValueError("x0 has the wrong dimension")

    final = np.empty((n_paths, c.d))
    max_drift = np.zeros(n_paths)
    step_sq = np.zeros(n_paths)
    status = np.zeros(n_paths, dtype=np.int8)
    cdef double[:, ::1] fv = final
    cdef double[::1] mdv = max_drift
    cdef double[::1] ssv = step_sq
    cdef signed char[::1] stv = status

    with nogil:
        for p in range(n_paths):
            for k in range(c.d):
                c.x[k] = x0[k]
            i0 = inv_value(&c, c.x)
            prev = i0
            st = ST_OK
            for j in range(n_steps):
                c.h = h
                for k in range(m):
                    c.dw[k] = increments[p, k, j]
                if c.scheme == 4:
                    hf = h
                    for k in range(m):
                        dwf[k] = c.dw[k]
                    st = composition_step(&c, &hf, dwf, y)
                elif c.scheme == 0 or c.scheme == 3:
                    st = implicit_step(&c, y)
                else:
                    st = explicit_step(&c, y)
                if st != ST_OK:
                    break
                if not in_domain(&c, y):
                    st = ST_DOMAIN
                    break
                for k in range(c.d):
                    c.x[k] = y[k]
                cur = inv_value(&c, c.x)
                dr = fabs(cur - i0)
                if dr > mdv[p]:
                    mdv[p] = dr
                ssv[p] += (cur - prev) * (cur - prev)
                prev = cur
            for k in range(c.d):
                fv[p, k] = c.x[k]
            stv[p] = st
    return final, max_drift, step_sq, status
