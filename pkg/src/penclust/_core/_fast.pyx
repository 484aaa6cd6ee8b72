# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pure``; same signatures, same results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, sqrt, fabs, INFINITY, isinf

cnp.import_array()

cdef double VARIANCE_FLOOR = 1e-6
cdef double LOG_2PI = 1.8378770664093453
cdef int BISECT_MAX = 200
cdef int SCAN_POINTS = 16


def log_densities(const double[:, ::1] X, const double[:, ::1] mu, const double[:, ::1] sigma2):
    cdef Py_ssize_t n = X.shape[0], K = X.shape[1], g = mu.shape[0]
    cdef Py_ssize_t i, j, k
    out_arr = np.empty((n, g))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] inv = np.empty((g, K))
    cdef double[::1] const = np.empty(g)
    cdef double acc, diff
    with nogil:
        _prepare(mu, sigma2, inv, const)
        for j in range(n):
            for i in range(g):
                acc = 0.0
                for k in range(K):
                    diff = X[j, k] - mu[i, k]
                    acc += diff * diff * inv[i, k]
                out[j, i] = const[i] - 0.5 * acc
    return out_arr


cdef void _prepare(const double[:, ::1] mu, const double[:, ::1] sigma2,
                   double[:, ::1] inv, double[::1] const) noexcept nogil:
    cdef Py_ssize_t g = mu.shape[0], K = mu.shape[1], i, k
    cdef double logdet
    for i in range(g):
        logdet = 0.0
        for k in range(K):
            inv[i, k] = 1.0 / sigma2[i, k]
            logdet += log(sigma2[i, k])
        const[i] = -0.5 * (K * LOG_2PI + logdet)


def e_step(const double[:, ::1] X, const double[::1] log_pi,
           const double[:, ::1] mu, const double[:, ::1] sigma2):
    cdef Py_ssize_t n = X.shape[0], K = X.shape[1], g = mu.shape[0]
    cdef Py_ssize_t i, j, k
    tau_arr = np.empty((n, g))
    cdef double[:, ::1] tau = tau_arr
    cdef double[:, ::1] inv = np.empty((g, K))
    cdef double[::1] const = np.empty(g)
    cdef double acc, diff, top, tot, ll = 0.0
    with nogil:
        _prepare(mu, sigma2, inv, const)
        for j in range(n):
            top = -INFINITY
            for i in range(g):
                if isinf(log_pi[i]) and log_pi[i] < 0:
                    tau[j, i] = -INFINITY
                    continue
                acc = 0.0
                for k in range(K):
                    diff = X[j, k] - mu[i, k]
                    acc += diff * diff * inv[i, k]
                tau[j, i] = log_pi[i] + const[i] - 0.5 * acc
                if tau[j, i] > top:
                    top = tau[j, i]
            tot = 0.0
            for i in range(g):
                tau[j, i] = exp(tau[j, i] - top)
                tot += tau[j, i]
            for i in range(g):
                tau[j, i] /= tot
            ll += top + log(tot)
    return tau_arr, ll


def centered_sq(const double[:, ::1] X, const double[:, ::1] tau, const double[:, ::1] mu):
    cdef Py_ssize_t n = X.shape[0], K = X.shape[1], g = mu.shape[0]
    cdef Py_ssize_t i, j, k
    out_arr = np.zeros((g, K))
    cdef double[:, ::1] out = out_arr
    cdef double t, diff
    with nogil:
        for j in range(n):
            for i in range(g):
                t = tau[j, i]
                for k in range(K):
                    diff = X[j, k] - mu[i, k]
                    out[i, k] += t * diff * diff
    return out_arr


cdef inline double _sign(double x) noexcept nogil:
    return (x > 0) - (x < 0)


cdef double _var_one(double b, double c, double lam) noexcept nogil:
    cdef double st = c / b, d = b - c, disc, root, q_root
    if lam == 0:
        return st
    if fabs(d) > lam:
        return st / (0.5 + sqrt(0.25 + _sign(c - b) * lam * c / (b * b)))
    if st >= 1 or isinf(lam):
        return 1.0
    disc = b * b - 4.0 * lam * c
    if disc < 0:
        return 1.0
    root = 2.0 * c / (b + sqrt(disc))
    if root > st and root < 1:
        q_root = -b * log(root) - c / root - lam * fabs(root - 1.0)
        if q_root > -c:
            return root
    return 1.0


cdef double _var_two(double b, double c, double lam) noexcept nogil:
    if lam == 0:
        return c / b
    if fabs(b - c) > lam:
        return (c / b) / (1.0 + _sign(c - b) * lam / b)
    return 1.0


def _elementwise(which, b, c, lam):
    b, c, lam = np.broadcast_arrays(
        np.asarray(b, dtype=np.float64), np.asarray(c, dtype=np.float64),
        np.asarray(lam, dtype=np.float64))
    shape = b.shape
    cdef const double[::1] bv = np.ascontiguousarray(b).ravel()
    cdef const double[::1] cv = np.ascontiguousarray(c).ravel()
    cdef const double[::1] lv = np.ascontiguousarray(lam).ravel()
    out_arr = np.empty(bv.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t t
    cdef int hits = 0, one = which == 1
    cdef double v
    with nogil:
        for t in range(bv.shape[0]):
            v = _var_one(bv[t], cv[t], lv[t]) if one else _var_two(bv[t], cv[t], lv[t])
            if v < VARIANCE_FLOOR:
                v = VARIANCE_FLOOR
                hits += 1
            out[t] = v
    return out_arr.reshape(shape), hits


def var_update_one(b, c, lam):
    return _elementwise(1, b, c, lam)


def var_update_two(b, c, lam):
    return _elementwise(2, b, c, lam)


cdef int _gm_core(const double* sx, double tau_sum, const double* s, Py_ssize_t m,
                  double L, double* out) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0, r = 0.0, r_new, den, phi, dphi, step
    cdef int it
    if L == 0:
        for k in range(m):
            out[k] = sx[k] / tau_sum
        return 1
    for k in range(m):
        out[k] = 0.0
    if isinf(L):
        return 1
    for k in range(m):
        acc += (sx[k] / s[k]) ** 2
    if sqrt(acc) <= L:
        return 1
    for it in range(BISECT_MAX):
        phi = -1.0
        dphi = 0.0
        for k in range(m):
            den = tau_sum * r + L * s[k]
            phi += (sx[k] / den) ** 2
            dphi -= 2.0 * tau_sum * sx[k] * sx[k] / (den * den * den)
        step = phi / dphi
        r_new = r - step
        if r_new <= r or fabs(step) <= 1e-15 * r_new:
            if r_new > r:
                r = r_new
            for k in range(m):
                out[k] = sx[k] * r / (tau_sum * r + L * s[k])
            return 1
        r = r_new
    for k in range(m):
        out[k] = sx[k] * r / (tau_sum * r + L * s[k])
    return 0


def group_mean(sx_in, double tau_sum, s_in, double L):
    cdef const double[::1] sx = np.ascontiguousarray(sx_in, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(s_in, dtype=np.float64)
    out_arr = np.zeros(sx.shape[0])
    cdef double[::1] out = out_arr
    cdef int ok = 1
    if sx.shape[0] > 0:
        ok = _gm_core(&sx[0], tau_sum, &s[0], sx.shape[0], L, &out[0])
    return out_arr, bool(ok)


def check_group_variance_at_one(double b, c_in, double L):
    cdef const double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    return bool(_at_one(b, &c[0], c.shape[0], L))


cdef bint _at_one(double b, const double* c, Py_ssize_t m, double L) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    cdef bint nonpos = True
    for k in range(m):
        acc += (b - c[k]) ** 2
        if b - 2.0 * c[k] > 0:
            nonpos = False
    if nonpos:
        return sqrt(acc) <= L
    return sqrt(acc) < L


cdef double _cubic_u(double b, double c, double a) noexcept nogil:
    """Offset ``u = s - 1`` of the best stationary point of one coordinate's surrogate.

    The surrogate is ``p(s) = -b log s - c/s - (a/2)(s - 1)^2``; its stationary
    points are the roots of ``u (1 + u)^2 + (b/a) u + (b - c)/a`` between 0 and
    ``c/b - 1``.  Working in ``u`` keeps full relative precision as ``a`` grows.
    """
    cdef double st = c / b, bb, d, lo, hi, flo, fm, dfm, nxt, u, u1, best, best_p, disc, sq, p
    cdef int it, t
    if c == b:
        return 0.0
    bb = b / a
    d = (b - c) / a
    if st > 1:
        lo = 0.0
        hi = st - 1.0
    else:
        lo = st - 1.0
        hi = 0.0
    # Newton kept inside the sign-change bracket, bisecting when it leaves
    flo = lo * (1.0 + lo) * (1.0 + lo) + bb * lo + d
    u = -d / (1.0 + bb)
    if not (lo < u < hi):
        u = 0.5 * (lo + hi)
    for it in range(BISECT_MAX):
        fm = u * (1.0 + u) * (1.0 + u) + bb * u + d
        if fm == 0:
            break
        if (fm < 0) == (flo < 0):
            lo = u
            flo = fm
        else:
            hi = u
        dfm = (1.0 + u) * (1.0 + 3.0 * u) + bb
        nxt = u - fm / dfm if dfm != 0 else 0.5 * (lo + hi)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if fabs(nxt - u) <= 1e-15 * fabs(nxt) or hi - lo <= 1e-15 * max(fabs(lo), fabs(hi)):
            u = nxt
            break
        u = nxt
    u1 = u
    if st > 1:
        return u1
    best = u1
    best_p = -b * log1p(u1) - c / (1.0 + u1) - 0.5 * a * u1 * u1
    # the other two roots of the deflated quadratic, when real and in range
    disc = -3.0 * u1 * u1 - 4.0 * u1 - 4.0 * bb
    if disc >= 0:
        sq = sqrt(disc)
        for t in range(2):
            u = 0.5 * (-(u1 + 2.0) + sq) if t == 0 else 0.5 * (-(u1 + 2.0) - sq)
            if u > st - 1.0 and u < 0:
                p = -b * log1p(u) - c / (1.0 + u) - 0.5 * a * u * u
                if p > best_p:
                    best = u
                    best_p = p
    return best


cdef double _block_gap(double b, const double* c, Py_ssize_t m, double r, double L,
                       double* out) noexcept nogil:
    """Fill ``out`` with the surrogate sweep at radius ``r``; return ||out - 1|| - r."""
    cdef double a = L / r, acc = 0.0, u
    cdef Py_ssize_t k
    for k in range(m):
        u = _cubic_u(b, c[k], a)
        out[k] = 1.0 + u
        acc += u * u
    return sqrt(acc) - r


cdef double _objective(double b, const double* c, Py_ssize_t m, double L,
                       const double* s) noexcept nogil:
    cdef double acc = 0.0, nrm = 0.0
    cdef Py_ssize_t k
    for k in range(m):
        acc += -b * log(s[k]) - c[k] / s[k]
        nrm += (s[k] - 1.0) ** 2
    return acc - L * sqrt(nrm)


def group_var_objective(double b, c_in, double L, s_in):
    cdef const double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(s_in, dtype=np.float64)
    return _objective(b, &c[0], c.shape[0], L, &s[0])


cdef double _gap_only(double b, const double* c, Py_ssize_t m, double r, double L) noexcept nogil:
    cdef double a = L / r, acc = 0.0
    cdef Py_ssize_t k
    for k in range(m):
        acc += _cubic_u(b, c[k], a) ** 2
    return sqrt(acc) - r


cdef int _solve_down(double b, const double* c, Py_ssize_t m, double L, double lo, double hi,
                     int budget, double* root) noexcept nogil:
    """Root of the gap on ``[lo, hi]`` with gap(lo) > 0 >= gap(hi).

    Illinois regula falsi, with a bisection step whenever the previous step
    failed to halve the bracket.  Returns 1 on convergence.
    """
    cdef int used = 2, side = 0
    cdef double glo, ghi, x, gx, width
    glo = _gap_only(b, c, m, lo, L)
    ghi = _gap_only(b, c, m, hi, L)
    width = hi - lo
    while used < budget:
        if hi - lo > 0.5 * width or glo - ghi <= 0:
            x = 0.5 * (lo + hi)
        else:
            x = lo + (hi - lo) * glo / (glo - ghi)
            if not (lo < x < hi):
                x = 0.5 * (lo + hi)
        width = hi - lo
        gx = _gap_only(b, c, m, x, L)
        used += 1
        if gx > 0:
            lo = x
            glo = gx
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi = x
            ghi = gx
            if side == -1:
                glo *= 0.5
            side = -1
        if gx == 0 or hi - lo <= 1e-13 * hi:
            root[0] = x if gx == 0 else 0.5 * (lo + hi)
            return 1
    root[0] = 0.5 * (lo + hi)
    return 0


cdef void _consider(double b, const double* c, Py_ssize_t m, double L, double r,
                    double* sol, double* out, double* best_h) noexcept nogil:
    """Sweep at radius ``r`` into ``sol``; copy to ``out`` when it beats ``best_h``."""
    cdef double h
    cdef Py_ssize_t k
    _block_gap(b, c, m, r, L, sol)
    h = _objective(b, c, m, L, sol)
    if h > best_h[0]:
        best_h[0] = h
        for k in range(m):
            out[k] = sol[k]


cdef int _gv_core(double b, const double* c, Py_ssize_t m, double L, const double* s_init,
                  double* sol, double* out, int max_outer) noexcept nogil:
    """Block variance update written to ``out``; returns 1 when the tracked solve converged."""
    cdef Py_ssize_t k
    cdef double r_max = 0.0, r = 0.0, tiny, gap, gp, probe, stride, direction
    cdef double lo = 0.0, hi = 0.0, best_h, h, tracked = -1.0, prev_r, prev_gap, rj, gj, root
    cdef int evals, bracket = 0, converged = 0, j
    cdef bint init_is_one = True, init_ok = True, concave = True

    if L == 0:
        for k in range(m):
            out[k] = max(c[k] / b, VARIANCE_FLOOR)
        return 1
    if isinf(L):
        for k in range(m):
            out[k] = 1.0
        return 1

    for k in range(m):
        if s_init[k] != 1.0:
            init_is_one = False
        if s_init[k] <= 0:
            init_ok = False
        if 2.0 * c[k] <= b:
            concave = False
        r_max += (c[k] / b - 1.0) ** 2
    r_max = sqrt(r_max)
    for k in range(m):
        if init_is_one:
            r += (c[k] / b - 1.0) ** 2
        else:
            r += (s_init[k] - 1.0) ** 2
    r = min(sqrt(r), r_max)

    for k in range(m):
        out[k] = 1.0
    best_h = _objective(b, c, m, L, out)
    if init_ok:
        h = _objective(b, c, m, L, s_init)
        if h > best_h:
            best_h = h
            for k in range(m):
                out[k] = s_init[k]

    if r > 0:
        tiny = r_max * 1e-14
        gap = _gap_only(b, c, m, r, L)
        evals = 1
        direction = 1.0 if gap > 0 else -1.0
        stride = 1.0
        while evals < max_outer:
            if gap == 0 or fabs(gap) <= 1e-13 * r:
                converged = 1
                tracked = r
                break
            probe = min(max(r + stride * gap, tiny), r_max)
            gp = _gap_only(b, c, m, probe, L)
            evals += 1
            if gp * direction > 0:
                if probe == tiny:
                    converged = 1
                    break
                r = probe
                gap = gp
                stride *= 2.0
                continue
            if direction > 0:
                lo = r
                hi = probe
            else:
                lo = probe
                hi = r
            bracket = 1
            break
        if bracket:
            converged = _solve_down(b, c, m, L, lo, hi, max_outer - evals, &tracked)
        elif not converged:
            tracked = r
        if tracked > 0:
            _consider(b, c, m, L, tracked, sol, out, &best_h)
        # with every c_k/b > 1/2 the objective is concave on the box between
        # 1 and c/b, so the tracked crossing is the only one worth having
        if not concave:
            prev_r = tiny
            prev_gap = _gap_only(b, c, m, tiny, L)
            for j in range(1, SCAN_POINTS + 1):
                rj = r_max * j / SCAN_POINTS
                gj = _gap_only(b, c, m, rj, L)
                if prev_gap > 0 and gj <= 0 and not (prev_r <= tracked <= rj):
                    _solve_down(b, c, m, L, prev_r, rj, max_outer, &root)
                    _consider(b, c, m, L, root, sol, out, &best_h)
                prev_r = rj
                prev_gap = gj
    else:
        converged = 1

    for k in range(m):
        if out[k] < VARIANCE_FLOOR:
            out[k] = VARIANCE_FLOOR
    return converged


def group_variance(double b, c_in, double L, s_init_in, int max_outer=100):
    cdef const double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef const double[::1] s_init = np.ascontiguousarray(s_init_in, dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0]
    cdef double[::1] sol = np.empty(m)
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef int ok
    with nogil:
        ok = _gv_core(b, &c[0], m, L, &s_init[0], &sol[0], &out[0], max_outer)
    return out_arr, bool(ok)


def group_means_batch(const double[:, ::1] sx, const double[::1] tau_sum,
                      const double[:, ::1] sigma2, const double[::1] L,
                      const long[::1] order, const long[::1] starts):
    """Grouped mean update for every (component, block); returns ``(mu, failures)``.

    Block ``m`` holds variables ``order[starts[m]:starts[m + 1]]``; ``L[m]`` is
    its penalty ``lambda1 * sqrt(k_m)``.
    """
    cdef Py_ssize_t g = sx.shape[0], K = sx.shape[1], M = L.shape[0], i, blk, k, m, lo
    out_arr = np.empty((g, K))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t width = 1
    for blk in range(M):
        width = max(width, starts[blk + 1] - starts[blk])
    cdef double[::1] a = np.empty(width), s = np.empty(width), r = np.empty(width)
    cdef int failures = 0
    with nogil:
        for i in range(g):
            for blk in range(M):
                lo = starts[blk]
                m = starts[blk + 1] - lo
                for k in range(m):
                    a[k] = sx[i, order[lo + k]]
                    s[k] = sigma2[i, order[lo + k]]
                if not _gm_core(&a[0], tau_sum[i], &s[0], m, L[blk], &r[0]):
                    failures += 1
                for k in range(m):
                    out[i, order[lo + k]] = r[k]
    return out_arr, failures


def group_variances_batch(const double[::1] b, const double[:, ::1] c,
                          const double[:, ::1] s_init, const double[::1] L,
                          const long[::1] order, const long[::1] starts, int max_outer=100):
    """Grouped variance update for every (component, block); returns ``(s, failures)``."""
    cdef Py_ssize_t g = c.shape[0], K = c.shape[1], M = L.shape[0], i, blk, k, m, lo
    out_arr = np.empty((g, K))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t width = 1
    for blk in range(M):
        width = max(width, starts[blk + 1] - starts[blk])
    cdef double[::1] cb = np.empty(width), sb = np.empty(width), sol = np.empty(width), r = np.empty(width)
    cdef int failures = 0
    with nogil:
        for i in range(g):
            for blk in range(M):
                lo = starts[blk]
                m = starts[blk + 1] - lo
                for k in range(m):
                    cb[k] = c[i, order[lo + k]]
                    sb[k] = s_init[i, order[lo + k]]
                if not _gv_core(b[i], &cb[0], m, L[blk], &sb[0], &sol[0], &r[0], max_outer):
                    failures += 1
                for k in range(m):
                    out[i, order[lo + k]] = r[k]
    return out_arr, failures
