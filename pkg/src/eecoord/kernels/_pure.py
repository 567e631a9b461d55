"""Pure NumPy backend for the per-iteration hot kernels.

All functions operate on plain float64 arrays:

* ``p``      -- (M, N) transmit power in W per (base station, subcarrier)
* ``gk``     -- (M, M, N) scheduled-gain tensor, ``gk[q, m, n]`` is the
  noise-normalised gain from transmitter ``q`` to the user served by BS
  ``m`` on subcarrier ``n`` (1/W)
* ``alpha``/``beta`` -- (M, N) log-bound expansion coefficients
* ``theta``/``gamma`` -- (M, N) static power (W) and amplifier loss factors

The compiled backend in ``_core.pyx`` implements the same signatures; the
package selects one at import time (see ``eecoord.kernels``).
"""

import numpy as np

LN2 = float(np.log(2.0))

__all__ = [
    "sinr_and_den",
    "fg_grad",
    "prodlog_grad",
    "sumee_eval",
    "fixed_point_solve",
    "grid_scores",
]


def _diag_gains(gk):
    # gk[m, m, n] -> (M, N): gain of each BS towards its own scheduled user
    return np.einsum("mmn->mn", gk)


def sinr_and_den(p, gk):
    """Per-slot SINR and interference denominator.

    Returns ``(sinr, den)`` with ``den[m, n] = 1 + sum_{l != m} p[l, n]
    gk[l, m, n]`` and ``sinr = p * gk[m, m, n] / den``.
    """
    own = p * _diag_gains(gk)
    den = 1.0 + np.einsum("ln,lmn->mn", p, gk) - own
    return own / den, den


def fg_grad(p, gk, alpha, beta, theta, gamma, bandwidth, pi, true_rate):
    """Rate-side value, power-side value and log-power gradient.

    With ``true_rate`` the rate term per slot is ``log2(1 + SINR)``;
    otherwise the concave minorant ``alpha * log2(SINR) + beta`` is used
    (slots with ``alpha == 0`` contribute ``beta``).  Returns
    ``(f, g, grad)`` where ``f`` is ``bandwidth`` times the summed rate
    term, ``g = sum(theta + gamma * p)`` and ``grad`` is the gradient of
    ``f - pi * g`` with respect to ``q = ln p``.  ``f`` is ``-inf`` when a
    slot with positive weight has zero SINR.
    """
    sinr, den = sinr_and_den(p, gk)
    if true_rate:
        a_eff = sinr / (1.0 + sinr)
        slot = np.log2(1.0 + sinr)
    else:
        a_eff = alpha
        log_sinr = np.full_like(sinr, -np.inf)
        np.log2(sinr, out=log_sinr, where=sinr > 0.0)
        slot = np.where(alpha > 0.0, alpha * log_sinr + beta, beta)
    f = bandwidth * float(slot.sum())
    g = float((theta + gamma * p).sum())
    u = a_eff / den
    leak = np.einsum("jn,mjn->mn", u, gk) - u * _diag_gains(gk)
    grad = (bandwidth / LN2) * (a_eff - p * leak) - pi * gamma * p
    return f, g, grad


def prodlog_grad(p, gk, alpha, beta, theta, gamma, bandwidth, w_rate, w_pow, true_rate):
    """Weighted log-product objective and its log-power gradient.

    Per slot the rate factor is ``r = alpha * log2(SINR) + beta`` (bounded
    form) or ``r = log2(1 + SINR)`` (``true_rate``); the objective is
    ``sum(w_rate * ln r) + sum(w_pow * (ln bandwidth - ln(theta + gamma
    p)))``.  Returns ``(phi, grad)``; ``phi`` is ``-inf`` (and ``grad``
    zero) whenever some ``r <= 0``.
    """
    sinr, den = sinr_and_den(p, gk)
    if true_rate:
        a_eff = sinr / (1.0 + sinr)
        r = np.log2(1.0 + sinr)
    else:
        a_eff = alpha
        log_sinr = np.full_like(sinr, -np.inf)
        np.log2(sinr, out=log_sinr, where=sinr > 0.0)
        r = np.where(alpha > 0.0, alpha * log_sinr + beta, beta)
    pc = theta + gamma * p
    if not np.all(r > 0.0):
        return -np.inf, np.zeros_like(p)
    phi = float((w_rate * np.log(r)).sum()) + float(
        (w_pow * (np.log(bandwidth) - np.log(pc))).sum()
    )
    u = w_rate * a_eff / (LN2 * r * den)
    leak = np.einsum("jn,mjn->mn", u, gk) - u * _diag_gains(gk)
    grad = w_rate * a_eff / (LN2 * r) - p * leak - w_pow * gamma * p / pc
    return phi, grad


def sumee_eval(p, gk, theta, gamma, bandwidth, w):
    """Weighted sum of per-slot energy efficiencies plus its building blocks.

    Returns ``(value, interf, eq_weight, power_cost, leakage, delta)``:
    the scheduled co-channel interference, the consumption-scaled weight,
    the marginal power cost, the interference-leakage tax, and the exact
    power derivative ``delta = d(value)/dp`` assembled from them.
    """
    sinr, den = sinr_and_den(p, gk)
    diag = _diag_gains(gk)
    rate = bandwidth * np.log2(1.0 + sinr)
    pc = theta + gamma * p
    value = float((w * rate / pc).sum())
    interf = den - 1.0
    eq_weight = w / pc
    power_cost = w * gamma * rate / (pc * pc)
    fullden = den + p * diag
    v = eq_weight * sinr / fullden
    leakage = (bandwidth / LN2) * (np.einsum("jn,mjn->mn", v, gk) - v * diag)
    delta = (bandwidth / LN2) * eq_weight * diag / fullden - power_cost - leakage
    return value, interf, eq_weight, power_cost, leakage, delta


def grid_scores(p, gains, theta, gamma, bandwidth, w, users, u_count):
    """Best-schedule objective values for a batch of power candidates.

    ``p`` is (B, M, N); ``users[m, :u_count[m]]`` lists the users served by
    BS ``m``.  For each candidate the per-slot user is chosen optimally for
    each objective (schedules separate per slot once powers are fixed).
    Returns four (B,) arrays: global EE, weighted sum EE, weighted
    log-product EE (``-inf`` when a slot has zero rate) and sum rate.
    """
    n_batch, m_bs, n_sub = p.shape
    total = np.einsum("bln,lsn->bsn", p, gains)
    own = p[:, :, None, :] * gains[None, :, :, :]
    sinr = own / (1.0 + total[:, None, :, :] - own)
    rates = bandwidth * np.log2(1.0 + sinr)
    pc = theta[None] + gamma[None] * p
    cons = pc.reshape(n_batch, -1).sum(axis=1)

    mask = np.full((m_bs, gains.shape[1]), -np.inf)
    for m in range(m_bs):
        mask[m, users[m, :u_count[m]]] = 0.0
    masked_rates = rates + mask[None, :, :, None]
    w_rates = w[None] * rates + mask[None, :, :, None]
    with np.errstate(divide="ignore"):
        prod_score = (w[None] * np.where(rates > 0.0,
                                         np.log(np.maximum(rates, 1e-300) / pc[:, :, None, :]),
                                         -np.inf))
    prod_score = prod_score + mask[None, :, :, None]

    best_rate = masked_rates.max(axis=2)
    sumrate = best_rate.sum(axis=(1, 2))
    gee = sumrate / cons
    sumee = (w_rates.max(axis=2) / pc).sum(axis=(1, 2))
    prodlog = prod_score.max(axis=2).sum(axis=(1, 2))
    return gee, sumee, prodlog, sumrate


def fixed_point_solve(p0, gk, alpha, gamma, caps, pi, bandwidth, tol, max_iter):
    """Synchronous standard-interference-function iteration.

    Iterates ``p <- min(caps, alpha * B / (gamma * pi * ln2 + B *
    leak(p)))`` until the largest relative change drops below ``tol``.
    Returns ``(p, iterations)``; ``iterations == max_iter`` means the
    tolerance was not reached.
    """
    p = np.array(p0, dtype=float)
    diag = _diag_gains(gk)
    for it in range(1, max_iter + 1):
        den = 1.0 + np.einsum("ln,lmn->mn", p, gk) - p * diag
        u = alpha / den
        leak = np.einsum("jn,mjn->mn", u, gk) - u * diag
        denom = gamma * pi * LN2 + bandwidth * leak
        with np.errstate(divide="ignore"):
            p_new = np.where(denom > 0.0, alpha * bandwidth / np.maximum(denom, 1e-300), np.inf)
        p_new = np.minimum(caps, p_new)
        change = np.abs(p_new - p) / np.maximum(np.maximum(p, p_new), 1e-300)
        p = p_new
        if float(change.max(initial=0.0)) <= tol:
            return p, it
    return p, max_iter
