"""Global-energy-efficiency maximisation.

:func:`solve_gee` alternates three steps from a full-power start: expand
the log rate bound at the current SINRs, maximise the resulting
concave-over-convex ratio with Dinkelbach's procedure, and re-run the
per-slot scheduling rule.  Each outer iteration provably does not
decrease the exact GEE.  Under a per-subcarrier constraint the parametric
subproblems default to the standard-interference fixed point; under a
per-BS budget (and as the general-purpose engine) they are solved by
projected gradient ascent under the log-space diagonal metric.

:func:`solve_gee_nl` is the noise-limited variant: interference is
dropped, the objective becomes pseudo-concave in the powers, and the
parametric subproblems reduce to per-BS waterfilling, which makes the
alternation globally optimal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels, model
from .inner import (InnerSolveError, concave_max, dinkelbach, interference_fixed_point,
                    project_powers, waterfill_bisect)
from .model import (Allocation, NetworkInstance, PerBsPower, PerSubcarrierPower, SolverError,
                    SolverReport, gather_gains, make_allocation)
from .sca import ScaCoefficients, grad_gee_q


@dataclass
class GeeOptions:
    """Knobs for the GEE solvers.

    ``rel_tol`` is the outer stopping rule ``|f_i - f_{i-1}| / f_{i-1} <
    rel_tol``; iterations continue past it (up to ``outer_max_iter``) until
    the reported KKT residual also falls below ``kkt_target``, so that the
    returned point measurably satisfies the first-order conditions.
    """

    outer_max_iter: int = 50
    rel_tol: float = 1e-4
    dinkelbach_eps: float = 1e-6
    dinkelbach_max_rounds: int = 30
    inner_tol: float = 1e-6
    inner_max_iter: int = 400
    fixed_point_tol: float = 1e-8
    fixed_point_max_iter: int = 10_000
    mode: str = "interference"  # or "noise_limited"
    inner_engine: str = "auto"  # auto | gradient | fixed_point
    kkt_target: float = 1e-4

    def __post_init__(self):
        if self.outer_max_iter < 1:
            raise ValueError("outer_max_iter must be >= 1")
        for name in ("rel_tol", "dinkelbach_eps", "inner_tol", "fixed_point_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def _fit_budget_multipliers(inst, p, grad):
    """Non-negative LS fit of per-BS multipliers on non-floor slots."""
    lam = np.zeros(inst.m_bs)
    if isinstance(inst.constraint, PerBsPower):
        for m in range(inst.m_bs):
            if p[m].sum() < float(inst.constraint.p_max[m]) * (1.0 - 1e-6):
                continue  # complementary slackness: slack budget, lam = 0
            free = p[m] > inst.floors[m] * 4.0
            if np.any(free):
                num = float(np.dot(grad[m, free], p[m, free]))
                den = float(np.dot(p[m, free], p[m, free]))
                lam[m] = max(0.0, num / den)
    return lam


def _q_space_kkt_residual(inst, p, grad, objective_scale):
    """Scaled violation of ``grad - lam * p = 0`` with fitted multipliers.

    Slots parked at the power floor stand in for zero power, where only
    upward pressure counts as a violation.
    """
    p = np.asarray(p, dtype=float)
    if isinstance(inst.constraint, PerBsPower):
        lam = _fit_budget_multipliers(inst, p, grad)
        r = grad - lam[:, None] * p
    else:
        at_cap = p >= inst.caps * (1.0 - 1e-6)
        lam_slot = np.where(at_cap, np.maximum(grad / np.maximum(p, 1e-300), 0.0), 0.0)
        r = grad - lam_slot * p
    at_floor = p <= inst.floors * 4.0
    r = np.where(at_floor, np.maximum(r, 0.0), r)
    return float(np.abs(r).max()) / max(abs(objective_scale), 1e-300)


def gee_kkt_residual(inst: NetworkInstance, alloc: Allocation) -> float:
    """Stationarity residual of the exact GEE in log-power space, scaled by GEE."""
    p = np.maximum(alloc.power, inst.floors)
    grad = grad_gee_q(inst, alloc.schedule, np.log(p))
    return _q_space_kkt_residual(inst, p, grad, model.gee(inst, alloc))


def _solve_fractional(inst, schedule, coeffs, p_start, opts):
    """Dinkelbach solve of the bound ratio for a fixed schedule; returns powers.

    The parametric subproblems are concave in log-power; the gradient
    engine nevertheless iterates in power space (exact Euclidean projection
    onto the constraint set, gradient mapped by the chain rule), whose
    stationary points coincide with the log-space global optima.
    """
    gk = gather_gains(inst, schedule)
    alpha = np.ascontiguousarray(coeffs.alpha)
    beta = np.ascontiguousarray(coeffs.beta)
    inner_iters = 0

    engine = opts.inner_engine
    if engine == "auto":
        engine = "fixed_point" if isinstance(inst.constraint, PerSubcarrierPower) else "gradient"
    if engine == "fixed_point" and not isinstance(inst.constraint, PerSubcarrierPower):
        raise ValueError("fixed_point inner engine needs a per-subcarrier constraint")

    def f_val(p):
        f, _, _ = kernels.fg_grad(np.ascontiguousarray(p), gk, alpha, beta, inst.theta,
                                  inst.gamma, inst.bandwidth_hz, 0.0, False)
        return f

    def g_val(p):
        return float((inst.theta + inst.gamma * p).sum())

    def proj(p, w=None):
        return project_powers(inst, p, w)

    grad_scale = None

    def gradient_argmax(pi, p_prev):
        nonlocal inner_iters, grad_scale

        def value_grad(p):
            f, g, grad_q = kernels.fg_grad(np.ascontiguousarray(p), gk, alpha, beta,
                                           inst.theta, inst.gamma, inst.bandwidth_hz,
                                           pi, False)
            return f - pi * g, grad_q / p

        start = p_start if p_prev is None else p_prev
        if grad_scale is None:
            # anchor the stationarity tolerance to the log-space gradient
            # magnitude at the solver's initial point
            _, _, gq = kernels.fg_grad(np.ascontiguousarray(proj(start)), gk, alpha, beta,
                                       inst.theta, inst.gamma, inst.bandwidth_hz, pi, False)
            grad_scale = max(float(np.abs(gq).max()), 1e-300)
        res = concave_max(value_grad, proj, start, grad_tol=opts.inner_tol * grad_scale,
                          max_iter=opts.inner_max_iter, metric=lambda p: p)
        inner_iters += res.iterations
        return res.x

    if engine == "gradient":
        argmax = gradient_argmax
    else:
        def argmax(pi, p_prev):
            nonlocal inner_iters
            try:
                p = interference_fixed_point(inst, schedule, coeffs, pi, inst.caps,
                                             tol=opts.fixed_point_tol, p0=p_prev,
                                             max_iter=opts.fixed_point_max_iter)
            except InnerSolveError:
                # near-unit contraction modulus (interference-limited, small
                # pi): the gradient engine solves the same concave problem
                return gradient_argmax(pi, p_prev)
            inner_iters += 1
            return np.maximum(p, inst.floors)

    # the bound is tight at the expansion point, so its ratio there is a
    # valid warm start for the ratio parameter
    pi0 = max(f_val(p_start) / g_val(p_start), 0.0)
    p, state = dinkelbach(f_val, g_val, argmax, opts.dinkelbach_eps,
                          max_rounds=opts.dinkelbach_max_rounds, x0=p_start, pi0=pi0)
    return p, state, inner_iters


def solve_gee(inst: NetworkInstance, opts: GeeOptions | None = None):
    """Maximise GEE by bound-tightening plus Dinkelbach inner solves.

    Returns ``(Allocation, SolverReport)`` with a non-decreasing GEE trace.
    """
    opts = opts or GeeOptions()
    if opts.mode == "noise_limited":
        return solve_gee_nl(inst, replace(opts, mode="interference"))

    p = inst.max_power_alloc()
    k = model.best_schedule(inst, p, "rate")
    report = SolverReport()
    obj = model.gee(inst, make_allocation(inst, p, k, snap_zero=False, validate=False))
    dink_states = []
    try:
        for i in range(1, opts.outer_max_iter + 1):
            zbar = model.sinr_matrix(inst, p, k)
            coeffs = ScaCoefficients.at(zbar)
            p_start = np.maximum(p, inst.floors)
            p_cand, state, inners = _solve_fractional(inst, k, coeffs, p_start, opts)
            dink_states.append(state)
            report.inner_iteration_totals += inners

            cand_alloc = make_allocation(inst, p_cand, k, snap_zero=False, validate=False)
            if model.gee(inst, cand_alloc) >= obj:
                p = p_cand
            k = model.best_schedule(inst, p, "rate")
            new_obj = model.gee(inst, make_allocation(inst, p, k, snap_zero=False, validate=False))
            report.objective_trace.append(new_obj)
            report.iterations = i

            settled = abs(new_obj - obj) / max(abs(obj), 1e-300) < opts.rel_tol
            obj = new_obj
            if settled:
                alloc = make_allocation(inst, p, k, snap_zero=False, validate=False)
                report.kkt_residual = gee_kkt_residual(inst, alloc)
                if report.kkt_residual <= opts.kkt_target:
                    report.converged = True
                    report.stop_reason = "tolerance"
                    break
        else:
            report.stop_reason = "max_iter"
    except InnerSolveError as exc:
        raise SolverError(f"GEE inner engine failed: {exc}", report=report) from exc
    alloc = make_allocation(inst, p, k)
    if np.isnan(report.kkt_residual):
        report.kkt_residual = gee_kkt_residual(inst, alloc)
    report.dinkelbach_exits = dink_states  # type: ignore[attr-defined]
    return alloc, report


# ---------------------------------------------------------------------------
# noise-limited variant


def _nl_gee_value(inst, p, k):
    gd = model.gather_gains(inst, k)
    own = np.einsum("mmn->mn", gd)
    rates = inst.bandwidth_hz * np.log2(1.0 + p * own)
    return float(rates.sum()) / float((inst.theta + inst.gamma * p).sum())


def solve_gee_nl(inst: NetworkInstance, opts: GeeOptions | None = None):
    """Globally maximise the noise-limited GEE (interference dropped).

    Alternates own-gain scheduling with Dinkelbach over per-BS waterfilling
    (per-slot clipping under a per-subcarrier constraint).  The trace
    records the noise-limited objective.
    """
    opts = opts or GeeOptions()
    p = inst.max_power_alloc()
    k = model.nl_best_schedule(inst, p)
    per_bs = isinstance(inst.constraint, PerBsPower)
    report = SolverReport()
    obj = _nl_gee_value(inst, p, k)
    dink_states = []

    def make_argmax(own_gain):
        ones = np.ones(inst.n_sub)

        def argmax(pi, p_prev):
            out = np.empty((inst.m_bs, inst.n_sub))
            for m in range(inst.m_bs):
                with np.errstate(divide="ignore"):
                    offsets = np.where(own_gain[m] > 0.0, 1.0 / np.maximum(own_gain[m], 1e-300),
                                       np.inf)
                if per_bs:
                    res = waterfill_bisect(ones * inst.bandwidth_hz / kernels.LN2, offsets,
                                           float(inst.constraint.p_max[m]),
                                           d=pi * inst.gamma[m])
                    out[m] = res.powers
                else:
                    with np.errstate(divide="ignore"):
                        level = (inst.bandwidth_hz / kernels.LN2) / np.maximum(
                            pi * inst.gamma[m], 1e-300)
                    out[m] = np.clip(level - offsets, 0.0, inst.caps[m])
            return out

        return argmax

    try:
        for i in range(1, opts.outer_max_iter + 1):
            gd = model.gather_gains(inst, k)
            own = np.ascontiguousarray(np.einsum("mmn->mn", gd))

            def f_val(pp):
                return float((inst.bandwidth_hz * np.log2(1.0 + pp * own)).sum())

            def g_val(pp):
                return float((inst.theta + inst.gamma * pp).sum())

            p_cand, state = dinkelbach(f_val, g_val, make_argmax(own), opts.dinkelbach_eps,
                                       max_rounds=opts.dinkelbach_max_rounds, x0=p,
                                       pi0=max(f_val(p) / g_val(p), 0.0))
            dink_states.append(state)
            report.inner_iteration_totals += state.iteration
            if _nl_gee_value(inst, p_cand, k) >= obj:
                p = p_cand
            k = model.nl_best_schedule(inst, p)
            new_obj = _nl_gee_value(inst, p, k)
            report.objective_trace.append(new_obj)
            report.iterations = i
            settled = abs(new_obj - obj) / max(abs(obj), 1e-300) < opts.rel_tol
            obj = new_obj
            if settled:
                report.converged = True
                report.stop_reason = "tolerance"
                break
        else:
            report.stop_reason = "max_iter"
    except InnerSolveError as exc:
        raise SolverError(f"noise-limited GEE inner engine failed: {exc}", report=report) from exc
    alloc = make_allocation(inst, p, k)
    report.kkt_residual = _nl_kkt_residual(inst, p, k, obj)
    report.dinkelbach_exits = dink_states  # type: ignore[attr-defined]
    return alloc, report


def _nl_kkt_residual(inst, p, k, gee_val):
    """Stationarity residual of the noise-limited GEE in log-power space."""
    gd = model.gather_gains(inst, k)
    own = np.einsum("mmn->mn", gd)
    p = np.maximum(p, inst.floors)
    g = float((inst.theta + inst.gamma * p).sum())
    grad = ((inst.bandwidth_hz / kernels.LN2) * (p * own / (1.0 + p * own))
            - inst.gamma * p * gee_val) / g
    return _q_space_kkt_residual(inst, p, grad, gee_val)
