"""Reference strategies: full-power transmission and sum-rate maximisation.

``max_power`` is the no-optimisation baseline.  ``solve_sumrate`` reuses
the bound-tightening outer loop of the GEE solver with the fractional
inner solve replaced by maximising the rate side alone; the power model
plays no role in it.
"""

from __future__ import annotations

import numpy as np

from . import kernels, model
from .inner import InnerSolveError, concave_max, interference_fixed_point, project_powers, \
    waterfill_bisect
from .model import (NetworkInstance, PerBsPower, PerSubcarrierPower, SolverError, SolverReport,
                    gather_gains, make_allocation)
from .sca import ScaCoefficients
from .solver_gee import GeeOptions


def max_power(inst: NetworkInstance):
    """Transmit at maximum power, schedule by rate.

    Per-subcarrier: powers equal the caps; per-BS: the budget splits
    evenly across subcarriers.
    """
    p = inst.max_power_alloc()
    k = model.best_schedule(inst, p, "rate")
    alloc = make_allocation(inst, p, k)
    report = SolverReport(objective_trace=[model.sum_rate(inst, alloc)], iterations=0,
                          converged=True, stop_reason="tolerance", kkt_residual=0.0)
    return alloc, report


def _sumrate_value(inst, p, k):
    return float(model.rate_matrix(inst, p, k).sum())


def solve_sumrate(inst: NetworkInstance, opts: GeeOptions | None = None):
    """Maximise the network sum-rate (the rate side of GEE).

    Interference mode runs the bound-tightening loop with a single concave
    maximisation per iteration; noise-limited mode alternates scheduling
    with classical waterfilling (zero additive constant).  The monotone
    trace records the exact sum-rate.
    """
    opts = opts or GeeOptions()
    if opts.mode == "noise_limited":
        return _solve_sumrate_nl(inst, opts)
    p = inst.max_power_alloc()
    k = model.best_schedule(inst, p, "rate")
    report = SolverReport()
    obj = _sumrate_value(inst, p, k)
    engine = opts.inner_engine
    if engine == "auto":
        engine = "fixed_point" if isinstance(inst.constraint, PerSubcarrierPower) else "gradient"

    def proj(pp, w=None):
        return project_powers(inst, pp, w)

    grad_scale = None

    def gradient_solve(coeffs, k, start):
        nonlocal grad_scale
        gk = gather_gains(inst, k)
        alpha = np.ascontiguousarray(coeffs.alpha)
        beta = np.ascontiguousarray(coeffs.beta)

        def value_grad(pp):
            f, _, grad_q = kernels.fg_grad(np.ascontiguousarray(pp), gk, alpha, beta,
                                           inst.theta, inst.gamma, inst.bandwidth_hz,
                                           0.0, False)
            return f, grad_q / pp

        if grad_scale is None:
            _, _, gq = kernels.fg_grad(np.ascontiguousarray(proj(start)), gk, alpha, beta,
                                       inst.theta, inst.gamma, inst.bandwidth_hz, 0.0, False)
            grad_scale = max(float(np.abs(gq).max()), 1e-300)
        res = concave_max(value_grad, proj, start, grad_tol=opts.inner_tol * grad_scale,
                          max_iter=opts.inner_max_iter, metric=lambda pp: pp)
        return res.x, res.iterations

    try:
        for i in range(1, opts.outer_max_iter + 1):
            zbar = model.sinr_matrix(inst, p, k)
            coeffs = ScaCoefficients.at(zbar)
            if engine == "fixed_point":
                try:
                    p_cand = interference_fixed_point(inst, k, coeffs, 0.0, inst.caps,
                                                      tol=opts.fixed_point_tol, p0=p,
                                                      max_iter=opts.fixed_point_max_iter)
                    report.inner_iteration_totals += 1
                except InnerSolveError:
                    # the rate-only map contracts slowly when interference
                    # dominates; same concave problem via the gradient engine
                    p_cand, iters = gradient_solve(coeffs, k, np.maximum(p, inst.floors))
                    report.inner_iteration_totals += iters
            else:
                p_cand, iters = gradient_solve(coeffs, k, np.maximum(p, inst.floors))
                report.inner_iteration_totals += iters
            if _sumrate_value(inst, p_cand, k) >= _sumrate_value(inst, p, k):
                p = p_cand
            k = model.best_schedule(inst, p, "rate")
            new_obj = _sumrate_value(inst, p, k)
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
        raise SolverError(f"sum-rate inner engine failed: {exc}", report=report) from exc
    return make_allocation(inst, p, k), report


def _solve_sumrate_nl(inst, opts):
    """Classical waterfilling alternated with own-gain scheduling."""
    p = inst.max_power_alloc()
    k = model.nl_best_schedule(inst, p)
    per_bs = isinstance(inst.constraint, PerBsPower)
    report = SolverReport()
    obj = None
    levels = np.full(inst.n_sub, inst.bandwidth_hz / kernels.LN2)
    for i in range(1, opts.outer_max_iter + 1):
        gk = gather_gains(inst, k)
        own = np.einsum("mmn->mn", gk)
        with np.errstate(divide="ignore"):
            offsets = np.where(own > 0.0, 1.0 / np.maximum(own, 1e-300), np.inf)
        if per_bs:
            for m in range(inst.m_bs):
                p[m] = waterfill_bisect(levels, offsets[m],
                                        float(inst.constraint.p_max[m])).powers
        else:
            p = inst.caps.copy()  # rate is increasing in power: every slot at its cap
        k = model.nl_best_schedule(inst, p)
        gk = gather_gains(inst, k)
        own = np.einsum("mmn->mn", gk)
        new_obj = float((inst.bandwidth_hz * np.log2(1.0 + p * own)).sum())
        report.objective_trace.append(new_obj)
        report.iterations = i
        if obj is not None and abs(new_obj - obj) / max(abs(obj), 1e-300) < opts.rel_tol:
            report.converged = True
            report.stop_reason = "tolerance"
            break
        obj = new_obj
    else:
        report.stop_reason = "max_iter"
    return make_allocation(inst, p, k), report
