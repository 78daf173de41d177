# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-particle kernels: mixture score, recursive score estimation, ULA.

Operation order follows ``_numpy`` and ``GaussianMixture.score_batch`` so the
two backends agree to rounding.
"""

from libc.math cimport exp, sqrt, fabs
from libc.stdlib cimport malloc, free

NAME = "cython"

cdef double BOUND = 1e6

cdef enum:
    NCOEF = 8


cdef struct Mix:
    int m
    int d
    const double* log_c
    const double* means
    const double* inv_var
    double* ll


cdef struct Ctx:
    Mix* mix
    const double* lv          # (levels+1) x NCOEF
    const long long* nm       # (levels+1) x 3
    const double* noise       # this particle's noise row
    Py_ssize_t pos
    double* scratch           # 2*d per level
    long long grads
    double zmax
    int fail_level
    int fail_i
    int fail_j


cdef inline void mix_score(Mix* g, const double* x, double* out) noexcept nogil:
    cdef int i, c
    cdef int m = g.m, d = g.d
    cdef double sq, diff, mx, s, w
    for i in range(m):
        sq = 0.0
        for c in range(d):
            diff = g.means[i * d + c] - x[c]
            sq = sq + diff * diff
        g.ll[i] = g.log_c[i] - 0.5 * sq * g.inv_var[i]
    mx = g.ll[0]
    for i in range(1, m):
        if g.ll[i] > mx:
            mx = g.ll[i]
    s = 0.0
    for i in range(m):
        g.ll[i] = exp(g.ll[i] - mx)
        s = s + g.ll[i]
    for c in range(d):
        out[c] = 0.0
    for i in range(m):
        w = g.ll[i] * g.inv_var[i]
        for c in range(d):
            out[c] = out[c] + w * (g.means[i * d + c] - x[c])
    for c in range(d):
        out[c] = out[c] / s


cdef inline double norm(const double* x, int d) noexcept nogil:
    cdef double s = 0.0
    cdef int c
    for c in range(d):
        s = s + x[c] * x[c]
    return sqrt(s)


cdef inline bint finite_ok(const double* x, int d) noexcept nogil:
    cdef int c
    for c in range(d):
        if not (fabs(x[c]) <= BOUND):
            return False
    return True


cdef int rse(Ctx* ctx, int level, const double* coef, const double* x, double* out) noexcept nogil:
    cdef int d = ctx.mix.d
    cdef int c, rc
    cdef long long i, j, n, m
    cdef double et, e2t, inv_den, exp_t, init_sd, tau, sq2tau, inv_n, z
    cdef double* xp
    cdef double* vb
    cdef const double* nz
    if level == 0:
        ctx.grads += 1
        mix_score(ctx.mix, x, out)
        return 0
    et = coef[0]; e2t = coef[1]; inv_den = coef[2]; exp_t = coef[3]
    init_sd = coef[4]; tau = coef[5]; sq2tau = coef[6]; inv_n = coef[7]
    n = ctx.nm[level * 3]
    m = ctx.nm[level * 3 + 1]
    xp = ctx.scratch + 2 * d * level
    vb = xp + d
    for c in range(d):
        out[c] = 0.0
    for i in range(n):
        nz = ctx.noise + ctx.pos
        for c in range(d):
            xp[c] = exp_t * x[c] + init_sd * nz[c]
        ctx.pos += d
        if not finite_ok(xp, d):
            ctx.fail_level = level; ctx.fail_i = <int>i; ctx.fail_j = -1
            return 1
        z = norm(xp, d)
        if z > ctx.zmax:
            ctx.zmax = z
        for j in range(m):
            rc = rse(ctx, level - 1, ctx.lv + (level - 1) * NCOEF, xp, vb)
            if rc:
                return rc
            nz = ctx.noise + ctx.pos
            for c in range(d):
                xp[c] = xp[c] + tau * (vb[c] + (et * x[c] - e2t * xp[c]) * inv_den) + sq2tau * nz[c]
            ctx.pos += d
            if not finite_ok(xp, d):
                ctx.fail_level = level; ctx.fail_i = <int>i; ctx.fail_j = <int>j
                return 1
            z = norm(xp, d)
            if z > ctx.zmax:
                ctx.zmax = z
        for c in range(d):
            out[c] = out[c] + inv_n * (-(x[c] - et * xp[c]) * inv_den)
    return 0


def rse_run(double[:, ::1] X, double[:, ::1] V, const double[:, ::1] lv, const long long[:, ::1] nm,
            const double[:, ::1] steps, const double[:, ::1] noise, tuple score, int levels, bint outer,
            double[::1] zmax, long long[::1] loc):
    cdef const double[::1] log_c = score[0]
    cdef const double[:, ::1] means = score[1]
    cdef const double[::1] inv_var = score[2]
    cdef Py_ssize_t B = X.shape[0], T = steps.shape[0]
    cdef int d = X.shape[1]
    cdef Py_ssize_t D = nm[levels, 2]
    cdef Py_ssize_t per = D + (1 if outer else 0)
    cdef Py_ssize_t b, s
    cdef int c, rc = 0
    cdef long long grads = 0
    cdef Mix mix
    cdef Ctx ctx
    cdef double top[NCOEF]
    cdef double* v
    cdef double* xb
    cdef const double* nz
    if B == 0 or T == 0:
        return 0, 0
    mix.m = means.shape[0]
    mix.d = d
    mix.log_c = &log_c[0]
    mix.means = &means[0, 0]
    mix.inv_var = &inv_var[0]
    mix.ll = <double*> malloc(mix.m * sizeof(double))
    ctx.scratch = <double*> malloc((2 * d * (levels + 1) + d) * sizeof(double))
    if mix.ll == NULL or ctx.scratch == NULL:
        free(mix.ll); free(ctx.scratch)
        raise MemoryError()
    v = ctx.scratch + 2 * d * (levels + 1)
    ctx.mix = &mix
    ctx.lv = &lv[0, 0]
    ctx.nm = &nm[0, 0]
    with nogil:
        for b in range(B):
            ctx.noise = &noise[b, 0]
            ctx.pos = 0
            ctx.grads = 0
            ctx.zmax = zmax[b]
            xb = &X[b, 0]
            for s in range(T):
                for c in range(7):
                    top[c] = steps[s, c]
                top[7] = lv[levels, 7]
                ctx.pos = s * per * d
                rc = rse(&ctx, levels, top, xb, v)
                if rc:
                    loc[0] = b; loc[1] = s; loc[2] = ctx.fail_level
                    loc[3] = ctx.fail_i; loc[4] = ctx.fail_j; loc[5] = 1
                    break
                for c in range(d):
                    V[b, c] = v[c]
                if outer:
                    nz = &noise[b, 0] + (s * per + D) * d
                    for c in range(d):
                        xb[c] = steps[s, 7] * xb[c] + steps[s, 8] * v[c] + steps[s, 9] * nz[c]
                    if not finite_ok(xb, d):
                        loc[0] = b; loc[1] = s; loc[2] = levels
                        loc[3] = -1; loc[4] = -1; loc[5] = 1
                        rc = 1
                        break
            grads += ctx.grads
            zmax[b] = ctx.zmax
            if rc:
                break
    free(mix.ll)
    free(ctx.scratch)
    return rc, grads


def ula_run(double[:, ::1] X, double h, const double[:, ::1] noise, tuple score, long long[::1] loc):
    cdef const double[::1] log_c = score[0]
    cdef const double[:, ::1] means = score[1]
    cdef const double[::1] inv_var = score[2]
    cdef Py_ssize_t B = X.shape[0]
    cdef int d = X.shape[1]
    cdef Py_ssize_t T, b, s
    cdef int c, rc = 0
    cdef double sq = sqrt(2.0 * h)
    cdef Mix mix
    cdef double* g
    cdef double* xb
    cdef const double* nz
    if B == 0:
        return 0
    T = noise.shape[1] // d
    mix.m = means.shape[0]
    mix.d = d
    mix.log_c = &log_c[0]
    mix.means = &means[0, 0]
    mix.inv_var = &inv_var[0]
    mix.ll = <double*> malloc(mix.m * sizeof(double))
    g = <double*> malloc(d * sizeof(double))
    if mix.ll == NULL or g == NULL:
        free(mix.ll); free(g)
        raise MemoryError()
    with nogil:
        for b in range(B):
            xb = &X[b, 0]
            for s in range(T):
                mix_score(&mix, xb, g)
                nz = &noise[b, 0] + s * d
                for c in range(d):
                    xb[c] = xb[c] + h * g[c] + sq * nz[c]
                if not finite_ok(xb, d):
                    loc[0] = b; loc[1] = s; loc[2] = 0; loc[3] = -1; loc[4] = -1; loc[5] = 1
                    rc = 1
                    break
            if rc:
                break
    free(mix.ll)
    free(g)
    return rc
