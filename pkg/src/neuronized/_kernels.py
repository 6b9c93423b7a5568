"""Compiled inner loops for the neuronized-prior sampler and optimizer.

State is carried in plain arrays: ``alpha``, ``w``, ``T`` (the current
activations ``T(alpha_j - alpha0)``) and the residual ``r = y - X theta``.
Column ``j`` of ``X`` is read as ``X[:, j]`` so ``X`` should be Fortran
ordered.
"""

import math

import numba as nb
import numpy as np

from ._normal import log_ndtr, std_trunc_lower_rng, std_trunc_upper, trunc_normal_lower
from .activations import act_eval

W_FULL, W_BLOCK, W_FAST = 0, 1, 2


# ---------------------------------------------------------------------------
# scalar pieces

@nb.njit(cache=True)
def vm_parts(T, c, s, inv_tau2):
    """Return (log v, s^2 T^2 / v, m, 1/sqrt(v)) for v = c T^2 + 1/tau^2.

    Written so that very large ``T`` (saturated activations) stays finite.
    """
    if T == 0.0:
        return math.log(inv_tau2), 0.0, 0.0, 1.0 / math.sqrt(inv_tau2)
    aT = abs(T)
    if aT <= 1.0:
        v = c * T * T + inv_tau2
        return math.log(v), s * s * T * T / v, s * T / v, 1.0 / math.sqrt(v)
    den = c + inv_tau2 / (T * T)
    logv = 2.0 * math.log(aT) + math.log(den)
    if den == 0.0:
        return logv, 0.0, 0.0, 0.0
    m = s / (den * T)
    return logv, s * s / den, m, 1.0 / (aT * math.sqrt(den))


@nb.njit(cache=True)
def alpha_target(a, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs):
    """Collapsed log target of alpha_j with w_j integrated out."""
    T = act_eval(a - alpha0, kind, params, knots, coefs)
    logv, q, _, _ = vm_parts(T, c, s, inv_tau2)
    return -0.5 * logv - 0.5 * a * a + q / (2.0 * sigma2)


@nb.njit(cache=True)
def profile_target(a, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs):
    """Log posterior maximised over w_j (the ``-log v / 2`` term dropped)."""
    T = act_eval(a - alpha0, kind, params, knots, coefs)
    _, q, _, _ = vm_parts(T, c, s, inv_tau2)
    return -0.5 * a * a + q / (2.0 * sigma2)


@nb.njit(cache=True)
def exact_params(s, c, w, sigma2, alpha0):
    """Mixture weight and slab parameters of alpha_j | w_j under ReLU.

    Returns ``(log_kappa, log_1m_kappa, mean, sd)`` where the conditional is
    ``kappa N_(-inf, alpha0)(0, 1) + (1 - kappa) N_(alpha0, inf)(mean, sd^2)``.
    """
    return _exact_params(s, c, w, sigma2, alpha0, log_ndtr(alpha0))


@nb.njit(cache=True)
def _exact_params(s, c, w, sigma2, alpha0, log_a):
    # log_a = log Phi(alpha0), constant within a sweep
    D = c * w * w + sigma2
    mean = w * (s + alpha0 * c * w) / D
    sd = math.sqrt(sigma2 / D)
    log_b = (log_ndtr((mean - alpha0) / sd) + math.log(sd) + 0.5 * (mean / sd) ** 2
             - (2.0 * alpha0 * w * s + alpha0 * alpha0 * w * w * c) / (2.0 * sigma2))
    mx = max(log_a, log_b)
    lse = mx + math.log(math.exp(log_a - mx) + math.exp(log_b - mx))
    return log_a - lse, log_b - lse, mean, sd


@nb.njit(cache=True)
def exact_draw(s, c, w, sigma2, alpha0, u1, u2):
    log_k, _, mean, sd = exact_params(s, c, w, sigma2, alpha0)
    if u1 < math.exp(log_k):
        return std_trunc_upper(alpha0, u2)
    return trunc_normal_lower(mean, sd, alpha0, u2)


# ---------------------------------------------------------------------------
# small dense linear algebra

@nb.njit(cache=True)
def cholesky_inplace(A):
    """Lower Cholesky factor written into ``A``; returns False if not SPD."""
    k = A.shape[0]
    for j in range(k):
        d = A[j, j]
        for m in range(j):
            d -= A[j, m] * A[j, m]
        if not d > 0.0:
            return False
        d = math.sqrt(d)
        A[j, j] = d
        for i in range(j + 1, k):
            t = A[i, j]
            for m in range(j):
                t -= A[i, m] * A[j, m]
            A[i, j] = t / d
    for j in range(k):
        for i in range(j):
            A[i, j] = 0.0
    return True


@nb.njit(cache=True)
def forward_sub(L, b):
    k = b.size
    x = np.empty(k)
    for i in range(k):
        t = b[i]
        for m in range(i):
            t -= L[i, m] * x[m]
        x[i] = t / L[i, i]
    return x


@nb.njit(cache=True)
def backward_sub_t(L, b):
    # solves L^T x = b
    k = b.size
    x = np.empty(k)
    for i in range(k - 1, -1, -1):
        t = b[i]
        for m in range(i + 1, k):
            t -= L[m, i] * x[m]
        x[i] = t / L[i, i]
    return x


@nb.njit(cache=True)
def chol_jitter(A):
    """Cholesky with one retry after adding 1e-10 to the diagonal."""
    B = A.copy()
    if cholesky_inplace(B):
        return B, True
    B = A.copy()
    for i in range(B.shape[0]):
        B[i, i] += 1e-10
    ok = cholesky_inplace(B)
    return B, ok


# ---------------------------------------------------------------------------
# w | alpha, sigma^2

@nb.njit(cache=True)
def w_dense(idx, XtX, Xty, T, w, sig, tau2, z):
    k = idx.size
    A = np.empty((k, k))
    b = np.empty(k)
    for a in range(k):
        ia = idx[a]
        for c in range(k):
            ib = idx[c]
            A[a, c] = T[ia] * T[ib] * XtX[ia, ib]
        A[a, a] += 1.0 / tau2
        b[a] = T[ia] * Xty[ia]
    L, ok = chol_jitter(A)
    if not ok:
        return False
    mu = backward_sub_t(L, forward_sub(L, b))
    e = backward_sub_t(L, z)
    for a in range(k):
        w[idx[a]] = mu[a] + sig * e[a]
    return True


@nb.njit(cache=True)
def w_fast(idx, X, y, T, w, sig, tau2, zu, zd):
    """O(n^2 k) exact Gaussian draw (prior N(0, sig^2 tau2), k >> n)."""
    n = y.size
    k = idx.size
    Q = np.empty((n, k))
    for a in range(k):
        ia = idx[a]
        for i in range(n):
            Q[i, a] = X[i, ia] * T[ia]
    u = sig * math.sqrt(tau2) * zu
    v = np.dot(Q, u) + sig * zd
    M = tau2 * np.dot(Q, Q.T)
    for i in range(n):
        M[i, i] += 1.0
    L, ok = chol_jitter(M)
    if not ok:
        return False
    sol = backward_sub_t(L, forward_sub(L, y - v))
    wa = u + tau2 * np.dot(Q.T, sol)
    for a in range(k):
        w[idx[a]] = wa[a]
    return True


@nb.njit(cache=True)
def update_w(mode, X, y, XtX, Xty, T, w, sigma2, tau2, rng):
    n, p = X.shape
    sig = math.sqrt(sigma2)
    if mode == W_BLOCK:
        cnt = 0
        for j in range(p):
            if T[j] != 0.0:
                cnt += 1
        idx = np.empty(cnt, dtype=np.int64)
        cnt = 0
        sd0 = sig * math.sqrt(tau2)
        for j in range(p):
            if T[j] != 0.0:
                idx[cnt] = j
                cnt += 1
            else:
                w[j] = sd0 * rng.standard_normal()
        if cnt == 0:
            return True
        if cnt > 2 * n:
            return w_fast(idx, X, y, T, w, sig, tau2, rng.standard_normal(cnt),
                          rng.standard_normal(n))
        return w_dense(idx, XtX, Xty, T, w, sig, tau2, rng.standard_normal(cnt))
    idx = np.arange(p)
    if mode == W_FAST:
        return w_fast(idx, X, y, T, w, sig, tau2, rng.standard_normal(p), rng.standard_normal(n))
    return w_dense(idx, XtX, Xty, T, w, sig, tau2, rng.standard_normal(p))


@nb.njit(cache=True)
def recompute_residual(X, y, T, w, r):
    n, p = X.shape
    for i in range(n):
        r[i] = y[i]
    for j in range(p):
        tw = T[j] * w[j]
        if tw != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * tw


# ---------------------------------------------------------------------------
# coordinate sweep

@nb.njit(cache=True)
def coordinate_stats(X, j, r, tw):
    """Add predictor j back into the residual and return r_j . X_j."""
    n = X.shape[0]
    s = 0.0
    if tw != 0.0:
        for i in range(n):
            r[i] += X[i, j] * tw
            s += r[i] * X[i, j]
    else:
        for i in range(n):
            s += r[i] * X[i, j]
    return s


@nb.njit(cache=True)
def rw_update(a, s, c, sigma2, tau2, alpha0, kind, params, knots, coefs, M, sd, rng, acc):
    """M random-walk moves on the collapsed target, then w_j | alpha_j."""
    inv_tau2 = 1.0 / tau2
    cur = alpha_target(a, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs)
    for _ in range(M):
        prop = a + sd * rng.standard_normal()
        new = alpha_target(prop, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs)
        acc[1] += 1
        if math.log(rng.random()) < new - cur:
            a = prop
            cur = new
            acc[0] += 1
    t = act_eval(a - alpha0, kind, params, knots, coefs)
    _, _, m, isv = vm_parts(t, c, s, inv_tau2)
    wj = m + math.sqrt(sigma2) * isv * rng.standard_normal()
    return a, wj, t


@nb.njit(cache=True)
def exact_update(wj, s, c, sigma2, tau2, alpha0, log_a, rng):
    """Exact draw of alpha_j | w_j (ReLU), then w_j | alpha_j.

    Repeating the alpha_j draw with w_j held fixed would produce i.i.d.
    draws from the same conditional, so one draw stands in for M of them.
    """
    log_k, _, mean, sd = _exact_params(s, c, wj, sigma2, alpha0, log_a)
    if rng.random() < math.exp(log_k):
        a = -std_trunc_lower_rng(-alpha0, rng)
    else:
        a = mean + sd * std_trunc_lower_rng((alpha0 - mean) / sd, rng)
    t = a - alpha0 if a > alpha0 else 0.0
    _, _, m, isv = vm_parts(t, c, s, 1.0 / tau2)
    wj = m + math.sqrt(sigma2) * isv * rng.standard_normal()
    return a, wj, t


@nb.njit(cache=True)
def sweep(X, col_sq, r, alpha, w, T, sigma2, tau2, alpha0, kind, params, knots, coefs,
          M, sd, exact, rng, acc):
    """One pass of the per-coordinate (alpha_j, w_j) updates."""
    n, p = X.shape
    log_a = log_ndtr(alpha0)
    for j in range(p):
        s = coordinate_stats(X, j, r, T[j] * w[j])
        if exact:
            a, wj, t = exact_update(w[j], s, col_sq[j], sigma2, tau2, alpha0, log_a, rng)
        else:
            a, wj, t = rw_update(alpha[j], s, col_sq[j], sigma2, tau2, alpha0, kind, params,
                                 knots, coefs, M, sd, rng, acc)
        alpha[j] = a
        w[j] = wj
        T[j] = t
        tw = t * wj
        if tw != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * tw


@nb.njit(cache=True)
def draw_sigma2(r, w, tau2, a0, b0, rng):
    n = r.size
    p = w.size
    rate = b0
    for i in range(n):
        rate += 0.5 * r[i] * r[i]
    for j in range(p):
        rate += 0.5 * w[j] * w[j] / tau2
    shape = 0.5 * (n + p) + a0
    return rate / rng.gamma(shape, 1.0)


@nb.njit(cache=True)
def run_iterations(n_iter, it0, burn_in, thin, X, y, XtX, Xty, col_sq,
                   alpha, w, T, r, sig2, tau2, alpha0, kind, params, knots, coefs,
                   M, sd, exact, w_mode, a0, b0, fix_sigma, rng, acc,
                   track, theta_buf, alpha_buf, w_buf, sig_buf, store_latent, pos,
                   theta_sum, incl_sum, status):
    """Run ``n_iter`` full iterations of the Gibbs-within-Metropolis sampler.

    ``pos`` holds (next buffer row, number of storage events so far).
    ``status`` receives (code, iteration): code 1 = factorization failure,
    code 2 = non-finite state.
    """
    p = alpha.size
    cap = sig_buf.size
    for k in range(n_iter):
        it = it0 + k
        if not update_w(w_mode, X, y, XtX, Xty, T, w, sig2[0], tau2, rng):
            status[0] = 1
            status[1] = it
            return
        recompute_residual(X, y, T, w, r)
        sweep(X, col_sq, r, alpha, w, T, sig2[0], tau2, alpha0, kind, params, knots, coefs,
              M, sd, exact, rng, acc)
        if not fix_sigma:
            sig2[0] = draw_sigma2(r, w, tau2, a0, b0, rng)
        bad = not (sig2[0] > 0.0 and math.isfinite(sig2[0]))
        for j in range(p):
            if not (math.isfinite(alpha[j]) and math.isfinite(w[j])):
                bad = True
        if bad:
            status[0] = 2
            status[1] = it
            return
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            for j in range(p):
                theta_sum[j] += T[j] * w[j]
                if alpha[j] > alpha0:
                    incl_sum[j] += 1.0
            pos[1] += 1
            q = pos[0]
            if q < cap:
                for m in range(track.size):
                    j = track[m]
                    theta_buf[q, m] = T[j] * w[j]
                    if store_latent:
                        alpha_buf[q, m] = alpha[j]
                        w_buf[q, m] = w[j]
                sig_buf[q] = sig2[0]
            pos[0] = q + 1
