"""Weighted-sum energy-efficiency maximisation.

The interference-coupled problem is tackled by iterating its first-order
conditions: freeze the consumption-scaled weights, marginal power costs
and leakage taxes at the previous iterate, refresh the co-channel
interference, solve the resulting modified waterfilling per BS, and
re-run the weighted scheduling rule.  A fixed point of this loop
satisfies the KKT system exactly; convergence itself carries no proof, so
the report flags it honestly and an optional guard can force a monotone
trace at the price of the KKT property.

The noise-limited variant is separable: per-slot peak powers are computed
from a scalar pseudo-concavity equation, the objective restricted to the
resulting box is concave, and alternation with the weighted scheduling
rule is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, model
from .inner import InnerSolveError, concave_max, project_budget_box, waterfill_bisect
from .model import (Allocation, NetworkInstance, PerBsPower, SolverError, SolverReport,
                    gather_gains, make_allocation, scheduled_weights)


@dataclass
class SumEeOptions:
    outer_max_iter: int = 50
    rel_tol: float = 1e-4
    monotone_guard: bool = False
    kkt_target: float = 1e-5
    inner_tol: float = 1e-6
    inner_max_iter: int = 400
    mode: str = "interference"

    def __post_init__(self):
        if self.outer_max_iter < 1:
            raise ValueError("outer_max_iter must be >= 1")
        if self.rel_tol <= 0.0 or self.inner_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SumEeTerms:
    """Frozen auxiliary terms of the stationarity system, all (M, N).

    ``interference`` is the scheduled user's co-channel interference,
    ``eq_weight`` the weight scaled by consumed power (1/W),
    ``power_cost`` the marginal power price of the slot, and ``leakage``
    the tax for interference caused to the other cells' scheduled users.
    """

    interference: np.ndarray
    eq_weight: np.ndarray
    power_cost: np.ndarray
    leakage: np.ndarray


def sumee_terms(inst: NetworkInstance, alloc: Allocation) -> SumEeTerms:
    """Evaluate the auxiliary terms at an allocation."""
    gk = gather_gains(inst, alloc.schedule)
    w = scheduled_weights(inst, alloc.schedule)
    _, interf, eq_w, cost, leak, _ = kernels.sumee_eval(
        np.ascontiguousarray(alloc.power, dtype=float), gk, inst.theta, inst.gamma,
        inst.bandwidth_hz, w)
    return SumEeTerms(interf, eq_w, cost, leak)


def sumee_power_update(inst: NetworkInstance, schedule, terms: SumEeTerms):
    """Modified waterfilling rows for frozen terms; returns ``(p, lam)``.

    Per slot ``p = max(0, (B/ln2) Q / (lam + C + L) - (1 + I) / G)`` with
    the per-BS multiplier from bisection; under a per-subcarrier
    constraint the multiplier is absent and slots clip at their caps.
    """
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    own = np.einsum("mmn->mn", gk)
    levels = (inst.bandwidth_hz / kernels.LN2) * terms.eq_weight
    dterm = terms.power_cost + terms.leakage
    with np.errstate(divide="ignore"):
        offsets = np.where(own > 0.0, (1.0 + terms.interference) / np.maximum(own, 1e-300), np.inf)
    p = np.empty((inst.m_bs, inst.n_sub))
    lam = np.zeros(inst.m_bs)
    if isinstance(inst.constraint, PerBsPower):
        for m in range(inst.m_bs):
            res = waterfill_bisect(levels[m], offsets[m], float(inst.constraint.p_max[m]),
                                   d=dterm[m])
            p[m] = res.powers
            lam[m] = res.lam
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            raw = levels / np.maximum(dterm, 1e-300) - offsets
        # inf - inf from a zero-gain, zero-tax slot: off is optimal
        raw = np.where(np.isnan(raw), 0.0, raw)
        p[:] = np.clip(raw, 0.0, inst.caps)
    return p, lam


def _sumee_value(inst, p, k):
    gk = gather_gains(inst, k)
    w = scheduled_weights(inst, k)
    value, *_ = kernels.sumee_eval(np.ascontiguousarray(p, dtype=float), gk, inst.theta,
                                   inst.gamma, inst.bandwidth_hz, w)
    return value


def sumee_kkt_residual(inst: NetworkInstance, alloc: Allocation) -> float:
    """Scaled violation of the stationarity/complementarity system.

    The exact power derivative is evaluated at the allocation, per-BS
    multipliers are refitted by non-negative least squares on the active
    slots, and the largest violation is scaled by the largest magnitude
    among the stationarity terms.
    """
    gk = gather_gains(inst, alloc.schedule)
    w = scheduled_weights(inst, alloc.schedule)
    p = np.asarray(alloc.power, dtype=float)
    _, interf, eq_w, cost, leak, delta = kernels.sumee_eval(
        np.ascontiguousarray(p), gk, inst.theta, inst.gamma, inst.bandwidth_hz, w)
    own = np.einsum("mmn->mn", gk)
    rate_term = (inst.bandwidth_hz / kernels.LN2) * eq_w * own / (1.0 + interf + p * own)
    floor = inst.floors
    viol = np.zeros_like(p)
    lam = np.zeros(inst.m_bs)
    if isinstance(inst.constraint, PerBsPower):
        for m in range(inst.m_bs):
            free = p[m] > floor[m] * 4.0
            binding = p[m].sum() >= float(inst.constraint.p_max[m]) * (1.0 - 1e-6)
            if binding and np.any(free):
                lam[m] = max(0.0, float(np.mean(delta[m, free])))
            viol[m, free] = np.abs(delta[m, free] - lam[m])
            viol[m, ~free] = np.maximum(delta[m, ~free] - lam[m], 0.0)
            if not binding:
                # lam = 0 already; nothing extra to check
                pass
    else:
        at_cap = p >= inst.caps * (1.0 - 1e-6)
        free = (p > floor * 4.0) & ~at_cap
        viol = np.where(free, np.abs(delta), 0.0)
        viol = np.where(~free & ~at_cap, np.maximum(delta, 0.0), viol)
        viol = np.where(at_cap, np.maximum(-delta, 0.0), viol)
    scale = max(float(rate_term.max(initial=0.0)), float(cost.max(initial=0.0)),
                float(leak.max(initial=0.0)), float(lam.max(initial=0.0)), 1e-300)
    return float(viol.max()) / scale


def solve_sumee(inst: NetworkInstance, opts: SumEeOptions | None = None):
    """Iterate the first-order system of the weighted-sum EE problem.

    Returns ``(Allocation, SolverReport)``.  Without the guard, a
    converged run's allocation satisfies the KKT system to
    ``opts.kkt_target``; with ``monotone_guard`` the trace is
    non-decreasing but KKT satisfaction is not asserted.  Non-convergence
    at the iteration cap is reported, not raised.
    """
    opts = opts or SumEeOptions()
    if opts.mode == "noise_limited":
        return solve_sumee_nl(inst, opts)
    p = inst.max_power_alloc()
    k = model.best_schedule(inst, p, "weighted_rate")
    report = SolverReport()
    obj = _sumee_value(inst, p, k)
    for i in range(1, opts.outer_max_iter + 1):
        alloc = make_allocation(inst, p, k, snap_zero=False, validate=False)
        terms = sumee_terms(inst, alloc)
        p_cand, _ = sumee_power_update(inst, k, terms)
        report.inner_iteration_totals += inst.m_bs  # one waterfilling per BS
        if opts.monotone_guard and _sumee_value(inst, p_cand, k) < _sumee_value(inst, p, k):
            p_cand = p
        p = p_cand
        k = model.best_schedule(inst, p, "weighted_rate")
        new_obj = _sumee_value(inst, p, k)
        report.objective_trace.append(new_obj)
        report.iterations = i
        settled = abs(new_obj - obj) / max(abs(obj), 1e-300) < opts.rel_tol
        obj = new_obj
        if settled:
            alloc = make_allocation(inst, p, k, snap_zero=False, validate=False)
            report.kkt_residual = sumee_kkt_residual(inst, alloc)
            if opts.monotone_guard or report.kkt_residual <= opts.kkt_target:
                report.converged = True
                report.stop_reason = "tolerance"
                break
    else:
        report.stop_reason = "max_iter"
    alloc = make_allocation(inst, p, k)
    if np.isnan(report.kkt_residual):
        report.kkt_residual = sumee_kkt_residual(inst, alloc)
    return alloc, report


# ---------------------------------------------------------------------------
# noise-limited variant


def nl_slot_cap(a: float, c: float, tol: float = 1e-10) -> float:
    """Peak of ``u(x) = log2(1 + a x) / (x + c)`` for ``a, c > 0``.

    Returns the unique root of ``a (x + c) / (1 + a x) = ln(1 + a x)`` by
    bracketed bisection; ``u`` is concave on ``[0, root]`` and decreasing
    beyond it.  Non-positive ``a`` means the slot cannot transmit: 0.
    """
    if a <= 0.0:
        return 0.0
    if c <= 0.0:
        raise ValueError("power-model offset c must be positive")

    def psi(x):
        ax = a * x
        return a * (x + c) / (1.0 + ax) - np.log1p(ax)

    hi = 1.0
    for _ in range(400):
        if psi(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise InnerSolveError("could not bracket the per-slot peak")
    lo = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if psi(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nl_slot_caps(inst: NetworkInstance, schedule) -> np.ndarray:
    """Per-slot unconstrained maximisers for the scheduled users, (M, N)."""
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    own = np.einsum("mmn->mn", gk)
    caps = np.empty((inst.m_bs, inst.n_sub))
    for m in range(inst.m_bs):
        for n in range(inst.n_sub):
            caps[m, n] = nl_slot_cap(float(own[m, n]), float(inst.theta[m, n] / inst.gamma[m, n]))
    return caps


def _nl_value_grad(inst, own, w, log_objective):
    """Value/gradient oracle of the separable noise-limited objective."""
    bll = inst.bandwidth_hz

    def value_grad(p):
        ax = p * own
        rate_log2 = np.log2(1.0 + ax)
        pc = inst.theta + inst.gamma * p
        if log_objective:
            if not np.all(rate_log2 > 0.0):
                return -np.inf, np.zeros_like(p)
            val = float((w * (np.log(bll * rate_log2) - np.log(pc))).sum())
            grad = w * (own / (kernels.LN2 * (1.0 + ax) * rate_log2) - inst.gamma / pc)
        else:
            val = float((w * bll * rate_log2 / pc).sum())
            grad = w * bll * ((own / kernels.LN2) / (1.0 + ax) * pc
                              - inst.gamma * rate_log2) / (pc * pc)
        return val, grad

    return value_grad


def _solve_nl_separable(inst, opts, schedule_mode, log_objective):
    """Shared alternation for the separable noise-limited objectives."""
    per_bs = isinstance(inst.constraint, PerBsPower)
    p = inst.max_power_alloc()
    k = model.nl_best_schedule(inst, p, objective=schedule_mode)
    report = SolverReport()
    obj = None
    for i in range(1, opts.outer_max_iter + 1):
        gk = gather_gains(inst, k)
        own = np.ascontiguousarray(np.einsum("mmn->mn", gk))
        w = scheduled_weights(inst, k)
        peak = np.minimum(nl_slot_caps(inst, k), inst.caps)
        value_grad = _nl_value_grad(inst, own, w, log_objective)
        lo = inst.floors if log_objective else np.zeros_like(p)
        peak = np.maximum(peak, lo)

        budgets = inst.constraint.p_max if per_bs else None
        if per_bs and np.all(peak.sum(axis=1) <= np.asarray(budgets) * (1.0 + 1e-12)):
            p_cand = peak.copy()  # every summand at its own peak is feasible
            report.inner_iteration_totals += 1
        else:
            def proj(x, wts=None):
                if per_bs:
                    out = np.empty_like(x)
                    for m in range(inst.m_bs):
                        out[m] = project_budget_box(x[m], lo[m], peak[m], float(budgets[m]),
                                                    None if wts is None else wts[m])
                    return out
                return project_budget_box(x, lo, peak, None, wts)

            start = proj(np.minimum(p, peak))
            g0 = value_grad(start)[1]
            scale = float(np.abs(g0 * start).max()) if log_objective else float(np.abs(g0).max())
            res = concave_max(value_grad, proj, start,
                              grad_tol=opts.inner_tol * max(scale, 1e-300),
                              max_iter=opts.inner_max_iter,
                              metric=(lambda x: x) if log_objective else None)
            p_cand = res.x
            report.inner_iteration_totals += res.iterations
        if obj is not None and value_grad(p_cand)[0] < value_grad(p)[0]:
            p_cand = p
        p = p_cand
        k = model.nl_best_schedule(inst, p, objective=schedule_mode)
        gk = gather_gains(inst, k)
        own_new = np.ascontiguousarray(np.einsum("mmn->mn", gk))
        new_obj = _nl_value_grad(inst, own_new, scheduled_weights(inst, k), log_objective)(p)[0]
        report.objective_trace.append(new_obj)
        report.iterations = i
        if obj is not None and abs(new_obj - obj) / max(abs(obj), 1e-300) < opts.rel_tol:
            obj = new_obj
            report.converged = True
            report.stop_reason = "tolerance"
            break
        obj = new_obj
    else:
        report.stop_reason = "max_iter"
    alloc = make_allocation(inst, p, k, snap_zero=not log_objective)
    return alloc, report


def solve_sumee_nl(inst: NetworkInstance, opts: SumEeOptions | None = None):
    """Globally structured noise-limited weighted-sum EE solve."""
    opts = opts or SumEeOptions()
    try:
        return _solve_nl_separable(inst, opts, schedule_mode="weighted_rate", log_objective=False)
    except InnerSolveError as exc:
        raise SolverError(f"noise-limited sum-EE inner engine failed: {exc}") from exc
