"""Generic inner-problem engines.

Four reusable pieces sit here: Dinkelbach's ratio-maximisation loop, a
projected-gradient maximiser for concave problems, a bisection
waterfiller for separable KKT systems of the form ``p_n = max(0, a_n /
(lam + d_n) - b_n)``, and the synchronous standard-interference-function
fixed-point iteration.  All engines are reentrant pure procedures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .model import NetworkInstance, gather_gains
from .sca import ScaCoefficients


class InnerSolveError(RuntimeError):
    """An inner engine failed to meet its contract; carries its last state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class LineSearchError(InnerSolveError):
    """Backtracking found a direction where value and gradient disagree."""


# ---------------------------------------------------------------------------
# projections


def _budget_project_floor(v, lo, budget, w):
    """Exact weighted projection onto ``{x >= lo, sum(x) <= budget}``.

    Solves ``x = max(lo, v - tau * w)`` for the smallest ``tau >= 0``
    meeting the budget by sorting the floor-hit breakpoints ``(v - lo) /
    w`` (one pass, no iteration).
    """
    base = np.maximum(v, lo)
    if float(base.sum()) <= budget:
        return base
    r = (v - lo) / w
    order = np.argsort(-r)
    v_s = v[order]
    lo_s = lo[order]
    w_s = w[order]
    r_s = r[order]
    lo_total = float(lo.sum())
    cv = np.cumsum(v_s)
    cw = np.cumsum(w_s)
    clo = np.cumsum(lo_s)
    # with the first k slots active: tau = (sum_act v + sum_inact lo - budget) / sum_act w
    taus = (cv + (lo_total - clo) - budget) / cw
    nxt = np.concatenate((r_s[1:], [-np.inf]))
    valid = (taus <= r_s) & (taus >= nxt)
    k = int(np.argmax(valid))  # first consistent active set
    tau = max(float(taus[k]), 0.0)
    return np.maximum(lo, v - tau * w)


def project_budget_box(v, lo, hi=None, budget=None, weights=None):
    """Projection onto ``{lo <= p <= hi, sum(p) <= budget}``.

    ``hi`` and ``budget`` may each be ``None`` (absent).  With ``weights``
    the projection minimises ``sum((x - v)**2 / weights)``, so the shift is
    proportional to each slot's weight: ``x = clip(v - tau * weights)``
    with ``tau >= 0``.  Requires ``sum(lo) <= budget``.
    """
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    w = np.ones_like(v) if weights is None else np.broadcast_to(np.asarray(weights, float),
                                                                v.shape)
    if hi is None:
        if budget is None:
            return np.maximum(v, lo)
        return _budget_project_floor(v, lo, float(budget), w)
    hi_arr = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    base = np.clip(v, lo, hi_arr)
    if budget is None or float(base.sum()) <= budget:
        return base
    with np.errstate(divide="ignore"):
        tau_hi = float(((v - lo) / w).max())  # pushes every slot to its floor
    tau_lo = 0.0
    for _ in range(120):
        tau = 0.5 * (tau_lo + tau_hi)
        s = float(np.clip(v - tau * w, lo, hi_arr).sum())
        if s > budget:
            tau_lo = tau
        else:
            tau_hi = tau
        if abs(s - budget) <= 1e-14 * max(budget, 1.0):
            break
    return np.clip(v - tau_hi * w, lo, hi_arr)


def _budget_project_floor_rows(v, lo, budgets, w):
    """Row-batched variant of :func:`_budget_project_floor`, (M, N) inputs."""
    base = np.maximum(v, lo)
    need = base.sum(axis=1) > budgets
    if not need.any():
        return base
    r = (v - lo) / w
    order = np.argsort(-r, axis=1)
    v_s = np.take_along_axis(v, order, 1)
    lo_s = np.take_along_axis(lo, order, 1)
    w_s = np.take_along_axis(w, order, 1)
    r_s = np.take_along_axis(r, order, 1)
    cv = np.cumsum(v_s, axis=1)
    cw = np.cumsum(w_s, axis=1)
    clo = np.cumsum(lo_s, axis=1)
    lo_tot = lo.sum(axis=1, keepdims=True)
    taus = (cv + (lo_tot - clo) - budgets[:, None]) / cw
    nxt = np.concatenate((r_s[:, 1:], np.full((v.shape[0], 1), -np.inf)), axis=1)
    valid = (taus <= r_s) & (taus >= nxt)
    k = np.argmax(valid, axis=1)
    tau = np.maximum(taus[np.arange(v.shape[0]), k], 0.0)
    shifted = np.maximum(lo, v - tau[:, None] * w)
    return np.where(need[:, None], shifted, base)


def project_powers(inst: NetworkInstance, p: np.ndarray, weights=None) -> np.ndarray:
    """Project a power matrix onto the instance's feasible set (floored)."""
    from .model import PerBsPower

    p = np.asarray(p, dtype=float)
    if isinstance(inst.constraint, PerBsPower):
        w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=float)
        return _budget_project_floor_rows(p, inst.floors, np.asarray(inst.constraint.p_max), w)
    return project_budget_box(p, inst.floors, inst.caps, None, weights)


# ---------------------------------------------------------------------------
# projected gradient ascent


@dataclass
class ConcaveMaxResult:
    x: np.ndarray
    value: float
    residual: float
    iterations: int
    converged: bool


def concave_max(value_grad, project, x0, grad_tol=1e-6, f_tol=0.0, max_iter=500,
                armijo=1e-4, metric=None) -> ConcaveMaxResult:
    """Maximise a concave function over a convex set by projected ascent.

    ``value_grad(x) -> (value, gradient)`` (value may be ``-inf`` outside
    the objective's domain).  ``project(v, weights)`` maps any point to the
    feasible set, minimising the ``weights``-scaled squared distance
    (``weights=None`` means Euclidean).  An optional ``metric(x)`` returns
    per-coordinate scales ``sigma``; steps then follow ``sigma**2 * grad``
    with the matching weighted projection, which keeps the ascent property
    and tames badly scaled curvature (log-space geometry for power
    variables).  Stops when the infinity norm of the metric-mapped
    feasible-directions gradient drops below ``grad_tol``, when two
    consecutive accepted steps improve by less than ``f_tol``, or at
    ``max_iter``.  The returned value never falls below the start value.

    Raises :class:`LineSearchError` when no step size yields any increase
    although the projected step predicts a significant one (non-concave or
    inconsistent oracle).
    """
    x = project(np.array(x0, dtype=float), None)
    f, g = value_grad(x)
    if not np.isfinite(f):
        raise InnerSolveError("infeasible start: objective not finite at project(x0)")
    t = 1.0
    stalls = 0
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        sigma2 = None if metric is None else np.square(metric(x))
        d = g if sigma2 is None else sigma2 * g
        dnorm = float(np.abs(d).max(initial=0.0))
        if dnorm == 0.0:
            residual = 0.0
            converged = True
            break
        # gradient-mapping residual: metric-projected gradient in the
        # small-step limit
        eps = 1e-7 * (1.0 + float(np.abs(x).max())) / dnorm
        residual = float(np.abs((project(x + eps * d, sigma2) - x) / eps).max())
        if residual <= grad_tol:
            converged = True
            break

        accepted = False
        saw_increase = False
        first_gain = None
        while t >= 1e-20:
            xn = project(x + t * d, sigma2)
            dx = xn - x
            gain = float(np.vdot(g, dx))
            if gain <= 0.0 or not np.any(dx):
                break  # no feasible ascent left at this point
            if first_gain is None:
                first_gain = gain
            fn, gn = value_grad(xn)
            if np.isfinite(fn) and fn > f:
                saw_increase = True
            if np.isfinite(fn) and fn >= f + armijo * gain:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if (not saw_increase and first_gain is not None
                    and first_gain > 1e-6 * max(abs(f), 1.0)):
                raise LineSearchError(
                    "no step size increases the objective along the projected "
                    "gradient; non-concave or inconsistent oracle?",
                    state=(x, f, residual))
            break
        improvement = fn - f
        # Barzilai-Borwein spectral step for the next trial, Armijo-safeguarded
        s = xn - x
        y = g - gn  # positive curvature along s for concave objectives
        sy = float(np.vdot(s, y))
        ss = float(np.vdot(s, s / sigma2)) if sigma2 is not None else float(np.vdot(s, s))
        t_next = ss / sy if sy > 0.0 else t * 2.0
        x, f, g = xn, fn, gn
        t = min(max(t_next, 1e-12), 1e8) if np.isfinite(t_next) else min(t * 2.0, 1e8)
        if improvement <= f_tol:
            stalls += 1
            if stalls >= 2:
                break
        else:
            stalls = 0
    return ConcaveMaxResult(x=x, value=f, residual=residual, iterations=it, converged=converged)


# ---------------------------------------------------------------------------
# Dinkelbach


@dataclass
class DinkelbachState:
    """Exit record of one ratio-maximisation run."""

    pi: float
    f_val: float
    g_val: float
    iteration: int
    flag: int
    epsilon: float  # absolute tolerance in force at exit


def dinkelbach(f_oracle, g_oracle, argmax_oracle, epsilon=1e-6, *, relative=True,
               max_rounds=30, x0=None, pi0=0.0):
    """Maximise ``f / g`` by Dinkelbach's parametric iteration.

    ``argmax_oracle(pi, x_prev)`` must solve ``max f - pi * g`` over the
    feasible set (warm-startable at ``x_prev``; ``None`` on the first
    round).  ``epsilon`` is interpreted relative to ``g`` at the incumbent
    unless ``relative=False``.  Requires ``f`` concave with non-negative
    maximum and ``g`` positive convex, which makes every parametric
    subproblem concave and the ratio maximiser unique-valued.

    ``pi0`` warm-starts the ratio parameter; it must not exceed the
    achievable maximum of ``f / g`` (the ratio at any feasible point is
    safe).  Returns ``(x, DinkelbachState)``; the returned ``pi`` equals
    ``f / g`` of the previous iterate, so ``0 <= f - pi * g < epsilon`` at
    exit.  Raises :class:`InnerSolveError` after ``max_rounds``
    non-terminating rounds.
    """
    pi = max(float(pi0), 0.0)
    x = x0
    f = g = np.nan
    eps_abs = epsilon
    for rounds in range(1, max_rounds + 1):
        x = argmax_oracle(pi, x)
        f = float(f_oracle(x))
        g = float(g_oracle(x))
        if not g > 0.0:
            raise InnerSolveError(f"denominator must stay positive, got {g}")
        eps_abs = epsilon * g if relative else epsilon
        gap = f - pi * g
        if gap < eps_abs:
            # reconcile the pi = f/g division/multiplication round trip so the
            # mathematically guaranteed gap >= 0 also holds in floats
            while f - pi * g < 0.0:
                pi = np.nextafter(pi, -np.inf)
            return x, DinkelbachState(pi=pi, f_val=f, g_val=g, iteration=rounds,
                                      flag=1, epsilon=eps_abs)
        pi_new = f / g
        if pi_new <= pi:
            raise InnerSolveError(
                f"ratio parameter failed to increase ({pi} -> {pi_new}); inner argmax inexact?",
                state=DinkelbachState(pi, f, g, rounds, 0, eps_abs),
            )
        pi = pi_new
    raise InnerSolveError(
        f"no convergence within {max_rounds} rounds",
        state=DinkelbachState(pi, f, g, max_rounds, 0, eps_abs),
    )


# ---------------------------------------------------------------------------
# waterfilling


@dataclass
class WaterfillResult:
    powers: np.ndarray
    lam: float
    binding: bool


def waterfill_bisect(a, b, budget, caps=None, d=None, tol=1e-9) -> WaterfillResult:
    """Solve ``p_n = clip(a_n / (lam + d_n) - b_n, 0, caps_n)`` for the
    multiplier ``lam >= 0`` enforcing ``sum(p) <= budget``.

    ``a`` are per-slot numerator coefficients (> 0), ``b`` subtractive
    offsets (>= 0, ``inf`` switches a slot off), ``d`` slot-specific
    additive constants (default 0).  Either ``lam = 0`` and the budget is
    slack, or the budget binds to relative tolerance ``tol``.
    """
    a = np.asarray(a, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), a.shape)
    d_arr = np.zeros_like(a) if d is None else np.broadcast_to(np.asarray(d, dtype=float), a.shape)
    caps_arr = None if caps is None else np.broadcast_to(np.asarray(caps, dtype=float), a.shape)
    if budget <= 0.0:
        raise ValueError("budget must be positive")
    if np.any(a <= 0.0):
        raise ValueError("level coefficients must be positive")

    def powers_at(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = a / (lam + d_arr) - b
        raw = np.where(np.isnan(raw), 0.0, raw)
        p = np.maximum(raw, 0.0)
        if caps_arr is not None:
            p = np.minimum(p, caps_arr)
        return p

    p0 = powers_at(0.0)
    total0 = float(p0.sum())
    if total0 <= budget * (1.0 + tol):
        return WaterfillResult(p0, 0.0, binding=total0 >= budget * (1.0 - tol))

    lam_hi = 1.0
    for _ in range(300):
        if float(powers_at(lam_hi).sum()) <= budget:
            break
        lam_hi *= 2.0
    else:
        raise InnerSolveError("failed to bracket the waterfilling multiplier")
    lam_lo = 0.0
    lam = lam_hi
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        total = float(powers_at(lam).sum())
        if abs(total - budget) <= tol * budget:
            break
        if total > budget:
            lam_lo = lam
        else:
            lam_hi = lam
    else:
        lam = lam_hi
    p = powers_at(lam)
    return WaterfillResult(p, float(lam), binding=True)


# ---------------------------------------------------------------------------
# standard-interference-function fixed point


def interference_fixed_point(inst: NetworkInstance, schedule, coeffs: ScaCoefficients,
                             pi: float, caps, tol: float = 1e-8, max_iter: int = 10_000,
                             p0: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-subcarrier inner solve via the standard-interference fixed point.

    Iterates the capped interference map whose fixed point satisfies the
    KKT stationarity of ``max f - pi * g`` under per-slot caps.  The map is
    positive, monotone and scalable, so the synchronous iteration converges
    from any feasible positive start (default: the caps).
    """
    if pi < 0.0:
        raise ValueError("ratio parameter must be non-negative")
    caps = np.ascontiguousarray(np.broadcast_to(np.asarray(caps, dtype=float),
                                                (inst.m_bs, inst.n_sub)))
    start = caps if p0 is None else np.ascontiguousarray(np.asarray(p0, dtype=float))
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    p, iters = kernels.fixed_point_solve(start, gk, np.ascontiguousarray(coeffs.alpha),
                                         np.ascontiguousarray(inst.gamma), caps, float(pi),
                                         inst.bandwidth_hz, tol, max_iter)
    if iters >= max_iter:
        raise InnerSolveError(f"fixed point not reached within {max_iter} sweeps")
    return p


def interference_map(inst: NetworkInstance, schedule, coeffs: ScaCoefficients, pi: float,
                     p: np.ndarray) -> np.ndarray:
    """One uncapped application of the interference map (for property checks)."""
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    p = np.asarray(p, dtype=float)
    sinr, den = kernels.sinr_and_den(np.ascontiguousarray(p), gk)
    u = coeffs.alpha / den
    diag = np.einsum("mmn->mn", gk)
    leak = np.einsum("jn,mjn->mn", u, gk) - u * diag
    denom = inst.gamma * pi * kernels.LN2 + inst.bandwidth_hz * leak
    with np.errstate(divide="ignore"):
        return np.where(denom > 0.0, coeffs.alpha * inst.bandwidth_hz / np.maximum(denom, 1e-300),
                        np.inf)
