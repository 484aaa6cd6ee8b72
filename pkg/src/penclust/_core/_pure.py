"""Reference implementations of the numerical kernels in numpy/Python.

Every function here has a twin with the same signature in the compiled
``_fast`` extension.  This module is the fallback when the extension is not
built and the yardstick the extension is tested against.
"""

from __future__ import annotations

import math

import numpy as np

VARIANCE_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)
BISECT_MAX = 200
SCAN_POINTS = 16


def log_densities(X, mu, sigma2):
    X = np.asarray(X, dtype=np.float64)
    inv = 1.0 / sigma2
    quad = ((X[:, None, :] - mu[None, :, :]) ** 2 * inv[None, :, :]).sum(axis=2)
    const = -0.5 * (X.shape[1] * LOG_2PI + np.log(sigma2).sum(axis=1))
    return const[None, :] - 0.5 * quad


def e_step(X, log_pi, mu, sigma2):
    """Responsibilities and mixture log-likelihood.

    Components with ``log_pi == -inf`` get zero responsibility.
    """
    logp = log_densities(X, mu, sigma2) + log_pi[None, :]
    top = logp.max(axis=1, keepdims=True)
    w = np.exp(logp - top)
    tot = w.sum(axis=1, keepdims=True)
    tau = w / tot
    return tau, float((top[:, 0] + np.log(tot[:, 0])).sum())


def centered_sq(X, tau, mu):
    """``sum_j tau_ij (x_jk - mu_ik)^2`` as a ``g x K`` array."""
    X = np.asarray(X, dtype=np.float64)
    return np.einsum("jg,jgk->gk", tau, (X[:, None, :] - mu[None, :, :]) ** 2)


def _floor(s):
    hits = int(np.count_nonzero(s < VARIANCE_FLOOR))
    return np.maximum(s, VARIANCE_FLOOR), hits


def var_update_one(b, c, lam):
    """Elementwise maximizer of ``-b log s - c/s - lam |s - 1|`` over ``s > 0``.

    ``b, c, lam`` are arrays of one shape; ``lam`` may contain ``inf``.
    Returns ``(s, floor_hits)``.
    """
    b, c, lam = (np.asarray(a, dtype=np.float64) for a in (b, c, lam))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        st = c / b
        d = b - c
        out = np.ones_like(st)
        zero = lam == 0
        out[zero] = st[zero]

        shrink = ~zero & (np.abs(d) > lam)
        sg = np.sign(c - b)
        out[shrink] = (st / (0.5 + np.sqrt(0.25 + sg * lam * c / b**2)))[shrink]

        # Below one and inside the threshold: 1 competes with the smaller
        # root of -lam x^2 + b x - c, when that root lies in (st, 1).
        amb = ~zero & ~shrink & (st < 1)
        disc = b * b - 4.0 * lam * c
        root = 2.0 * c / (b + np.sqrt(np.where(disc >= 0, disc, 0.0)))
        ok = amb & (disc >= 0) & (root > st) & (root < 1)
        q_root = -b * np.log(root) - c / root - lam * np.abs(root - 1.0)
        win = ok & (q_root > -c)
        out[win] = root[win]
    return _floor(out)


def var_update_two(b, c, lam):
    """Elementwise maximizer of ``-b log s - c/s - lam |log s|``."""
    b, c, lam = (np.asarray(a, dtype=np.float64) for a in (b, c, lam))
    with np.errstate(divide="ignore", invalid="ignore"):
        st = c / b
        keep = np.abs(b - c) > lam
        out = np.where(keep, st / (1.0 + np.sign(c - b) * lam / b), 1.0)
        out = np.where(lam == 0, st, out)
    return _floor(out)


def group_mean(sx, tau_sum, s, L):
    """Maximizer of ``-sum_k (tau_sum mu_k^2 - 2 sx_k mu_k) / (2 s_k) - L ||mu||``.

    The stationary point satisfies ``mu_k = sx_k / (tau_sum + L s_k / r)`` with
    ``r = ||mu||``; ``r`` is the unique root of the convex decreasing function
    ``phi(r) = sum_k (sx_k / (tau_sum r + L s_k))^2 - 1``, which Newton's
    method approaches monotonically from ``r = 0``.

    Returns ``(mu, converged)``.
    """
    sx = np.asarray(sx, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if L == 0:
        return sx / tau_sum, True
    if math.isinf(L) or math.sqrt(((sx / s) ** 2).sum()) <= L:
        return np.zeros_like(sx), True
    r = 0.0
    for _ in range(BISECT_MAX):
        den = tau_sum * r + L * s
        phi = ((sx / den) ** 2).sum() - 1.0
        dphi = -2.0 * tau_sum * (sx * sx / den**3).sum()
        step = phi / dphi
        r_new = r - step
        if r_new <= r or abs(step) <= 1e-15 * r_new:
            r = max(r, r_new)
            return sx * r / (tau_sum * r + L * s), True
        r = r_new
    return sx * r / (tau_sum * r + L * s), False


def check_group_variance_at_one(b, c, L):
    """Whether an all-ones variance block satisfies the local-optimality test."""
    c = np.asarray(c, dtype=np.float64)
    d = b - c
    norm = math.sqrt((d * d).sum())
    if np.all(b - 2.0 * c <= 0):
        return norm <= L
    return norm < L


def _cubic_u(b, c, a):
    """Offset ``u = s - 1`` of the best stationary point of one coordinate's surrogate.

    The surrogate is ``p(s) = -b log s - c/s - (a/2)(s - 1)^2``; its stationary
    points are the roots of ``u (1 + u)^2 + (b/a) u + (b - c)/a`` between 0 and
    ``c/b - 1``.  Working in ``u`` keeps full relative precision as ``a`` grows.
    """
    st = c / b
    if c == b:
        return 0.0
    bb, d = b / a, (b - c) / a
    lo, hi = (0.0, st - 1.0) if st > 1 else (st - 1.0, 0.0)
    # Newton kept inside the sign-change bracket, bisecting when it leaves
    flo = lo * (1.0 + lo) ** 2 + bb * lo + d
    u = -d / (1.0 + bb)
    if not lo < u < hi:
        u = 0.5 * (lo + hi)
    for _ in range(BISECT_MAX):
        fm = u * (1.0 + u) * (1.0 + u) + bb * u + d
        if fm == 0:
            break
        if (fm < 0) == (flo < 0):
            lo, flo = u, fm
        else:
            hi = u
        dfm = (1.0 + u) * (1.0 + 3.0 * u) + bb
        nxt = u - fm / dfm if dfm != 0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        done = abs(nxt - u) <= 1e-15 * abs(nxt) or hi - lo <= 1e-15 * max(abs(lo), abs(hi))
        u = nxt
        if done:
            break
    u1 = u
    if st > 1:
        return u1
    best, best_p = u1, -b * math.log1p(u1) - c / (1.0 + u1) - 0.5 * a * u1 * u1
    # the other two roots of the deflated quadratic, when real and in range
    disc = -3.0 * u1 * u1 - 4.0 * u1 - 4.0 * bb
    if disc >= 0:
        sq = math.sqrt(disc)
        for u in (0.5 * (-(u1 + 2.0) + sq), 0.5 * (-(u1 + 2.0) - sq)):
            if st - 1.0 < u < 0:
                p = -b * math.log1p(u) - c / (1.0 + u) - 0.5 * a * u * u
                if p > best_p:
                    best, best_p = u, p
    return best


def group_var_objective(b, c, L, s):
    s = np.asarray(s, dtype=np.float64)
    return float((-b * np.log(s) - c / s).sum() - L * math.sqrt(((s - 1.0) ** 2).sum()))


def _offsets(b, c, r, L):
    a = L / r
    return np.array([_cubic_u(b, ck, a) for ck in c])


def _block_at(b, c, r, L):
    return 1.0 + _offsets(b, c, r, L)


def _gap(b, c, r, L):
    return math.sqrt((_offsets(b, c, r, L) ** 2).sum()) - r


def _solve_down(b, c, L, lo, hi, budget):
    """Root of the gap on ``[lo, hi]`` with gap(lo) > 0 >= gap(hi).

    Illinois regula falsi, with a bisection step whenever the previous step
    failed to halve the bracket.  Returns ``(r, used, converged)``.
    """
    glo, ghi = _gap(b, c, lo, L), _gap(b, c, hi, L)
    used, side, width = 2, 0, hi - lo
    while used < budget:
        if hi - lo > 0.5 * width or glo - ghi <= 0:
            x = 0.5 * (lo + hi)
        else:
            x = lo + (hi - lo) * glo / (glo - ghi)
            if not lo < x < hi:
                x = 0.5 * (lo + hi)
        width = hi - lo
        gx = _gap(b, c, x, L)
        used += 1
        if gx > 0:
            lo, glo = x, gx
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi, ghi = x, gx
            if side == -1:
                glo *= 0.5
            side = -1
        if gx == 0 or hi - lo <= 1e-13 * hi:
            return (x if gx == 0 else 0.5 * (lo + hi)), used, True
    return 0.5 * (lo + hi), used, False


def group_variance(b, c, L, s_init, max_outer=100, n_scan=SCAN_POINTS):
    """Maximize ``sum_k(-b log s_k - c_k/s_k) - L ||s - 1||`` over a block.

    With ``a = L / ||s - 1||`` frozen, each coordinate maximizes its own
    cubic surrogate; that sweep depends on the current block only through
    ``r = ||s - 1||``, so stationary blocks are the crossings of
    ``h(r) = ||s(L/r) - 1||`` with the diagonal on ``(0, ||c/b - 1||]``.
    The crossing nearest the start is tracked by growing strides along the
    sweep direction and then Illinois regula falsi; a scan over ``n_scan`` equally spaced
    radii brackets any other downward crossing (the local maxima along the
    sweep); the scan is skipped when every ``c_k/b > 1/2``, where the
    objective is concave on the box between 1 and ``c/b``.  The returned block is the best of those crossings, the all-ones
    block and ``s_init`` under the true objective, so it never scores below
    ``s_init``.

    Returns ``(s, converged)``; ``converged`` refers to the tracked crossing.
    """
    c = np.asarray(c, dtype=np.float64)
    st = c / b
    ones = np.ones_like(c)
    if L == 0:
        return _floor(st)[0], True
    if math.isinf(L):
        return ones, True

    s_init = np.asarray(s_init, dtype=np.float64)
    start = s_init if np.any(s_init != 1.0) else st
    r_max = math.sqrt(((st - 1.0) ** 2).sum())
    r = min(math.sqrt(((start - 1.0) ** 2).sum()), r_max)
    converged = False
    roots = []
    if r > 0:
        tiny = r_max * 1e-14
        gap = _gap(b, c, r, L)
        evals = 1
        direction = 1.0 if gap > 0 else -1.0
        stride = 1.0
        bracket = None
        while evals < max_outer:
            if gap == 0 or abs(gap) <= 1e-13 * r:
                converged = True
                roots.append(r)
                break
            probe = min(max(r + stride * gap, tiny), r_max)
            gp = _gap(b, c, probe, L)
            evals += 1
            if gp * direction > 0:
                if probe == tiny:
                    converged = True
                    break
                r, gap = probe, gp
                stride *= 2.0
                continue
            bracket = (r, probe) if direction > 0 else (probe, r)
            break
        if bracket is not None:
            r, _, converged = _solve_down(b, c, L, *bracket, max_outer - evals)
            roots.append(r)
        elif not converged:
            roots.append(r)

        # with every c_k/b > 1/2 the objective is concave on the box between
        # 1 and c/b, so the tracked crossing is the only one worth having
        if np.any(2.0 * c <= b):
            prev_r, prev_gap = tiny, _gap(b, c, tiny, L)
            for j in range(1, n_scan + 1):
                rj = r_max * j / n_scan
                gj = _gap(b, c, rj, L)
                if prev_gap > 0 >= gj and not any(prev_r <= x <= rj for x in roots):
                    roots.append(_solve_down(b, c, L, prev_r, rj, max_outer)[0])
                prev_r, prev_gap = rj, gj
    else:
        converged = True

    best = ones
    best_h = group_var_objective(b, c, L, ones)
    for cand in [_block_at(b, c, x, L) for x in roots] + [s_init]:
        if np.any(cand <= 0):
            continue
        h = group_var_objective(b, c, L, cand)
        if h > best_h:
            best, best_h = cand, h
    return np.maximum(best, VARIANCE_FLOOR), converged


def group_means_batch(sx, tau_sum, sigma2, L, order, starts):
    """Grouped mean update for every (component, block); returns ``(mu, failures)``.

    Block ``m`` holds variables ``order[starts[m]:starts[m + 1]]``; ``L[m]`` is
    its penalty ``lambda1 * sqrt(k_m)``.
    """
    out = np.empty_like(sx)
    failures = 0
    for i in range(sx.shape[0]):
        for m in range(len(L)):
            idx = order[starts[m]:starts[m + 1]]
            out[i, idx], ok = group_mean(sx[i, idx], tau_sum[i], sigma2[i, idx], L[m])
            failures += not ok
    return out, failures


def group_variances_batch(b, c, s_init, L, order, starts, max_outer=100):
    """Grouped variance update for every (component, block); returns ``(s, failures)``."""
    out = np.empty_like(c)
    failures = 0
    for i in range(c.shape[0]):
        for m in range(len(L)):
            idx = order[starts[m]:starts[m + 1]]
            out[i, idx], ok = group_variance(b[i], c[i, idx], L[m], s_init[i, idx], max_outer)
            failures += not ok
    return out, failures
