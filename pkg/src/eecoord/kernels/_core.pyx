# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the per-iteration hot kernels.

Same contracts as ``_pure``; explicit loops beat vectorised NumPy here
because the arrays are small (M ~ 3, N ~ 16) and the solvers call these
functions thousands of times per run.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, fabs, log, log1p, log2

cnp.import_array()

LN2 = 0.6931471805599453
cdef double _LN2 = 0.6931471805599453


def sinr_and_den(const double[:, ::1] p, const double[:, :, ::1] gk):
    cdef Py_ssize_t m_bs = p.shape[0], n_sub = p.shape[1]
    sinr_arr = np.empty((m_bs, n_sub))
    den_arr = np.empty((m_bs, n_sub))
    cdef double[:, ::1] sinr = sinr_arr
    cdef double[:, ::1] den = den_arr
    cdef Py_ssize_t m, n, l
    cdef double acc
    for n in range(n_sub):
        for m in range(m_bs):
            acc = 1.0
            for l in range(m_bs):
                if l != m:
                    acc += p[l, n] * gk[l, m, n]
            den[m, n] = acc
            sinr[m, n] = p[m, n] * gk[m, m, n] / acc
    return sinr_arr, den_arr


def fg_grad(const double[:, ::1] p, const double[:, :, ::1] gk,
            const double[:, ::1] alpha, const double[:, ::1] beta,
            const double[:, ::1] theta, const double[:, ::1] gamma,
            double bandwidth, double pi, bint true_rate):
    cdef Py_ssize_t m_bs = p.shape[0], n_sub = p.shape[1]
    grad_arr = np.empty((m_bs, n_sub))
    cdef double[:, ::1] grad = grad_arr
    cdef double[:, ::1] sinr = np.empty((m_bs, n_sub))
    cdef double[:, ::1] den = np.empty((m_bs, n_sub))
    cdef double[:, ::1] a_eff = np.empty((m_bs, n_sub))
    cdef Py_ssize_t m, n, j, l
    cdef double acc, f = 0.0, g = 0.0, s, leak
    cdef bint blew_up = False

    for n in range(n_sub):
        for m in range(m_bs):
            acc = 1.0
            for l in range(m_bs):
                if l != m:
                    acc += p[l, n] * gk[l, m, n]
            den[m, n] = acc
            s = p[m, n] * gk[m, m, n] / acc
            sinr[m, n] = s
            if true_rate:
                a_eff[m, n] = s / (1.0 + s)
                f += log2(1.0 + s)
            else:
                a_eff[m, n] = alpha[m, n]
                if alpha[m, n] > 0.0:
                    if s > 0.0:
                        f += alpha[m, n] * log2(s) + beta[m, n]
                    else:
                        blew_up = True
                else:
                    f += beta[m, n]
            g += theta[m, n] + gamma[m, n] * p[m, n]
    f *= bandwidth
    if blew_up:
        f = -INFINITY

    for n in range(n_sub):
        for m in range(m_bs):
            leak = 0.0
            for j in range(m_bs):
                if j != m:
                    leak += a_eff[j, n] / den[j, n] * gk[m, j, n]
            grad[m, n] = (bandwidth / _LN2) * (a_eff[m, n] - p[m, n] * leak) \
                - pi * gamma[m, n] * p[m, n]
    return f, g, grad_arr


def prodlog_grad(const double[:, ::1] p, const double[:, :, ::1] gk,
                 const double[:, ::1] alpha, const double[:, ::1] beta,
                 const double[:, ::1] theta, const double[:, ::1] gamma,
                 double bandwidth, const double[:, ::1] w_rate,
                 const double[:, ::1] w_pow, bint true_rate):
    cdef Py_ssize_t m_bs = p.shape[0], n_sub = p.shape[1]
    grad_arr = np.zeros((m_bs, n_sub))
    cdef double[:, ::1] grad = grad_arr
    cdef double[:, ::1] den = np.empty((m_bs, n_sub))
    cdef double[:, ::1] a_eff = np.empty((m_bs, n_sub))
    cdef double[:, ::1] r = np.empty((m_bs, n_sub))
    cdef Py_ssize_t m, n, j, l
    cdef double acc, s, phi = 0.0, pc, leak

    for n in range(n_sub):
        for m in range(m_bs):
            acc = 1.0
            for l in range(m_bs):
                if l != m:
                    acc += p[l, n] * gk[l, m, n]
            den[m, n] = acc
            s = p[m, n] * gk[m, m, n] / acc
            if true_rate:
                a_eff[m, n] = s / (1.0 + s)
                r[m, n] = log2(1.0 + s)
            else:
                a_eff[m, n] = alpha[m, n]
                if alpha[m, n] > 0.0:
                    if s > 0.0:
                        r[m, n] = alpha[m, n] * log2(s) + beta[m, n]
                    else:
                        r[m, n] = -INFINITY
                else:
                    r[m, n] = beta[m, n]
            if not r[m, n] > 0.0:
                return -INFINITY, grad_arr
            pc = theta[m, n] + gamma[m, n] * p[m, n]
            phi += w_rate[m, n] * log(r[m, n]) + w_pow[m, n] * (log(bandwidth) - log(pc))

    for n in range(n_sub):
        for m in range(m_bs):
            leak = 0.0
            for j in range(m_bs):
                if j != m:
                    leak += w_rate[j, n] * a_eff[j, n] / (_LN2 * r[j, n] * den[j, n]) \
                        * gk[m, j, n]
            pc = theta[m, n] + gamma[m, n] * p[m, n]
            grad[m, n] = w_rate[m, n] * a_eff[m, n] / (_LN2 * r[m, n]) - p[m, n] * leak \
                - w_pow[m, n] * gamma[m, n] * p[m, n] / pc
    return phi, grad_arr


def sumee_eval(const double[:, ::1] p, const double[:, :, ::1] gk,
               const double[:, ::1] theta, const double[:, ::1] gamma,
               double bandwidth, const double[:, ::1] w):
    cdef Py_ssize_t m_bs = p.shape[0], n_sub = p.shape[1]
    interf_arr = np.empty((m_bs, n_sub))
    eqw_arr = np.empty((m_bs, n_sub))
    cost_arr = np.empty((m_bs, n_sub))
    leak_arr = np.empty((m_bs, n_sub))
    delta_arr = np.empty((m_bs, n_sub))
    cdef double[:, ::1] interf = interf_arr
    cdef double[:, ::1] eqw = eqw_arr
    cdef double[:, ::1] cost = cost_arr
    cdef double[:, ::1] leak = leak_arr
    cdef double[:, ::1] delta = delta_arr
    cdef double[:, ::1] sinr = np.empty((m_bs, n_sub))
    cdef double[:, ::1] fullden = np.empty((m_bs, n_sub))
    cdef Py_ssize_t m, n, j, l
    cdef double acc, s, pc, rate, value = 0.0, lk

    for n in range(n_sub):
        for m in range(m_bs):
            acc = 1.0
            for l in range(m_bs):
                if l != m:
                    acc += p[l, n] * gk[l, m, n]
            interf[m, n] = acc - 1.0
            s = p[m, n] * gk[m, m, n] / acc
            sinr[m, n] = s
            fullden[m, n] = acc + p[m, n] * gk[m, m, n]
            pc = theta[m, n] + gamma[m, n] * p[m, n]
            rate = bandwidth * log2(1.0 + s)
            value += w[m, n] * rate / pc
            eqw[m, n] = w[m, n] / pc
            cost[m, n] = w[m, n] * gamma[m, n] * rate / (pc * pc)

    for n in range(n_sub):
        for m in range(m_bs):
            lk = 0.0
            for j in range(m_bs):
                if j != m:
                    lk += eqw[j, n] * sinr[j, n] / fullden[j, n] * gk[m, j, n]
            leak[m, n] = (bandwidth / _LN2) * lk
            delta[m, n] = (bandwidth / _LN2) * eqw[m, n] * gk[m, m, n] / fullden[m, n] \
                - cost[m, n] - leak[m, n]
    return value, interf_arr, eqw_arr, cost_arr, leak_arr, delta_arr


def fixed_point_solve(const double[:, ::1] p0, const double[:, :, ::1] gk,
                      const double[:, ::1] alpha, const double[:, ::1] gamma,
                      const double[:, ::1] caps, double pi, double bandwidth,
                      double tol, int max_iter):
    cdef Py_ssize_t m_bs = p0.shape[0], n_sub = p0.shape[1]
    p_arr = np.array(p0, dtype=float)
    nxt_arr = np.empty((m_bs, n_sub))
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] nxt = nxt_arr
    cdef double[:, ::1] den = np.empty((m_bs, n_sub))
    cdef Py_ssize_t m, n, j, l
    cdef int it
    cdef double acc, leak, denom, val, change, ref, worst

    for it in range(1, max_iter + 1):
        for n in range(n_sub):
            for m in range(m_bs):
                acc = 1.0
                for l in range(m_bs):
                    if l != m:
                        acc += p[l, n] * gk[l, m, n]
                den[m, n] = acc
        worst = 0.0
        for n in range(n_sub):
            for m in range(m_bs):
                leak = 0.0
                for j in range(m_bs):
                    if j != m:
                        leak += alpha[j, n] / den[j, n] * gk[m, j, n]
                denom = gamma[m, n] * pi * _LN2 + bandwidth * leak
                if denom > 0.0:
                    val = alpha[m, n] * bandwidth / denom
                else:
                    val = INFINITY
                if val > caps[m, n]:
                    val = caps[m, n]
                nxt[m, n] = val
                ref = p[m, n] if p[m, n] > val else val
                if ref < 1e-300:
                    ref = 1e-300
                change = fabs(val - p[m, n]) / ref
                if change > worst:
                    worst = change
        for n in range(n_sub):
            for m in range(m_bs):
                p[m, n] = nxt[m, n]
        if worst <= tol:
            return p_arr, it
    return p_arr, max_iter


def grid_scores(const double[:, :, ::1] p, const double[:, :, ::1] gains,
                const double[:, ::1] theta, const double[:, ::1] gamma,
                double bandwidth, const double[:, :, ::1] w,
                const long[:, ::1] users, const long[::1] u_count):
    cdef Py_ssize_t n_batch = p.shape[0], m_bs = p.shape[1], n_sub = p.shape[2]
    gee_arr = np.empty(n_batch)
    sumee_arr = np.empty(n_batch)
    prodlog_arr = np.empty(n_batch)
    sumrate_arr = np.empty(n_batch)
    cdef double[::1] gee = gee_arr
    cdef double[::1] sumee = sumee_arr
    cdef double[::1] prodlog = prodlog_arr
    cdef double[::1] sumrate = sumrate_arr
    cdef Py_ssize_t b, m, n, j, l, s
    cdef double interf_all, sinr, rate, pc, best_r, best_w, best_pl, sc
    cdef double tot_rate, tot_sumee, tot_prod, tot_cons
    cdef bint prod_dead

    for b in range(n_batch):
        tot_rate = 0.0
        tot_sumee = 0.0
        tot_prod = 0.0
        tot_cons = 0.0
        prod_dead = False
        for n in range(n_sub):
            for m in range(m_bs):
                pc = theta[m, n] + gamma[m, n] * p[b, m, n]
                tot_cons += pc
                best_r = -INFINITY
                best_w = -INFINITY
                best_pl = -INFINITY
                for j in range(u_count[m]):
                    s = users[m, j]
                    interf_all = 1.0
                    for l in range(m_bs):
                        if l != m:
                            interf_all += p[b, l, n] * gains[l, s, n]
                    sinr = p[b, m, n] * gains[m, s, n] / interf_all
                    rate = bandwidth * log2(1.0 + sinr)
                    if rate > best_r:
                        best_r = rate
                    sc = w[m, s, n] * rate
                    if sc > best_w:
                        best_w = sc
                    if rate > 0.0:
                        sc = w[m, s, n] * log(rate / pc)
                        if sc > best_pl:
                            best_pl = sc
                tot_rate += best_r
                tot_sumee += best_w / pc
                if best_pl == -INFINITY:
                    prod_dead = True
                else:
                    tot_prod += best_pl
        gee[b] = tot_rate / tot_cons
        sumee[b] = tot_sumee
        prodlog[b] = -INFINITY if prod_dead else tot_prod
        sumrate[b] = tot_rate
    return gee_arr, sumee_arr, prodlog_arr, sumrate_arr
