"""Log-product energy-efficiency maximisation.

The objective is the log of the exponentially-weighted product of
per-slot efficiencies, which forces every slot to carry power (a silent
slot drives it to minus infinity).  Each outer iteration expands the log
rate bound at the current SINRs and maximises the resulting concave
surrogate in log-power space; the positivity of the bounded rate terms is
kept by a logarithmic barrier with decreasing weight, followed by a
barrier-free polish.  The trace of the exact objective is non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, model
from .inner import InnerSolveError, concave_max, project_powers
from .model import (Allocation, NetworkInstance, SolverError, SolverReport,
                    gather_gains, make_allocation, scheduled_weights)
from .sca import ScaCoefficients, grad_lnprodee_q
from .solver_gee import _q_space_kkt_residual
from .solver_sumee import SumEeOptions, _solve_nl_separable


@dataclass
class ProdEeOptions:
    outer_max_iter: int = 50
    rel_tol: float = 1e-4
    barrier_init: float = 1e-2
    barrier_factor: float = 0.1
    barrier_min: float = 1e-8
    inner_tol: float = 1e-6
    inner_max_iter: int = 300
    kkt_target: float = 1e-4
    mode: str = "interference"

    def __post_init__(self):
        if self.outer_max_iter < 1:
            raise ValueError("outer_max_iter must be >= 1")
        if min(self.rel_tol, self.inner_tol, self.barrier_init, self.barrier_min) <= 0.0:
            raise ValueError("tolerances and barrier weights must be positive")


def _check_structural(inst: NetworkInstance):
    mask = inst.cell_mask()
    for m in range(inst.m_bs):
        served = inst.gains[m, mask[m], :]
        if np.any(served.max(axis=0) <= 0.0):
            raise ValueError(
                f"BS {m} has a subcarrier where every served user has zero gain; "
                "the log-product objective is structurally minus infinity")


def _lnprodee(inst, p, k):
    gk = gather_gains(inst, k)
    w = scheduled_weights(inst, k)
    zeros = np.zeros_like(p)
    val, _ = kernels.prodlog_grad(np.ascontiguousarray(p, dtype=float), gk, zeros, zeros,
                                  inst.theta, inst.gamma, inst.bandwidth_hz, w, w, True)
    return val


def prodee_kkt_residual(inst: NetworkInstance, alloc: Allocation) -> float:
    """Stationarity residual of the exact log-product objective.

    Scaled by the magnitude of the gradient's constituent terms (rate pull
    plus consumption drag), not the gradient itself, so a converged point
    where the terms cancel reads as a small relative residual.
    """
    p = np.maximum(alloc.power, inst.floors)
    grad = grad_lnprodee_q(inst, alloc.schedule, np.log(p))
    sinr = model.sinr_matrix(inst, p, alloc.schedule)
    w = scheduled_weights(inst, alloc.schedule)
    r = np.log2(1.0 + sinr)
    rate_pull = w * (sinr / (1.0 + sinr)) / (kernels.LN2 * np.maximum(r, 1e-300))
    drag = w * inst.gamma * p / (inst.theta + inst.gamma * p)
    scale = max(float(rate_pull.max()), float(drag.max()), 1e-300)
    return _q_space_kkt_residual(inst, p, grad, scale)


def _barrier_schedule(opts):
    weights = []
    b = opts.barrier_init
    while b >= opts.barrier_min * (1.0 - 1e-12):
        weights.append(b)
        b *= opts.barrier_factor
    weights.append(0.0)  # final polish drops the barrier
    return weights


def solve_prodee(inst: NetworkInstance, opts: ProdEeOptions | None = None):
    """Maximise the log-product EE; returns ``(Allocation, SolverReport)``.

    Raises :class:`ValueError` when some slot cannot achieve positive rate
    (the objective is then structurally unbounded below).
    """
    opts = opts or ProdEeOptions()
    if opts.mode == "noise_limited":
        return solve_prodee_nl(inst, opts)
    _check_structural(inst)
    p = np.maximum(inst.max_power_alloc(), inst.floors)
    k = model.best_schedule(inst, p, "prod")

    def proj(pp, w=None):
        return project_powers(inst, pp, w)

    report = SolverReport()
    obj = _lnprodee(inst, p, k)
    if not np.isfinite(obj):
        raise SolverError("initial point has a zero-rate slot despite positive gains",
                          report=report)
    grad_scale = None
    try:
        for i in range(1, opts.outer_max_iter + 1):
            zbar = model.sinr_matrix(inst, p, k)
            coeffs = ScaCoefficients.at(zbar)
            gk = gather_gains(inst, k)
            w = scheduled_weights(inst, k)
            alpha = np.ascontiguousarray(coeffs.alpha)
            beta = np.ascontiguousarray(coeffs.beta)
            p_work = np.maximum(p, inst.floors)
            for barrier in _barrier_schedule(opts):
                w_rate = np.ascontiguousarray(w + barrier)

                def value_grad(pp, w_rate=w_rate):
                    phi, grad_q = kernels.prodlog_grad(np.ascontiguousarray(pp), gk, alpha,
                                                       beta, inst.theta, inst.gamma,
                                                       inst.bandwidth_hz, w_rate, w, False)
                    if not np.isfinite(phi):
                        return phi, grad_q
                    return phi, grad_q / pp

                if grad_scale is None:
                    _, gq = kernels.prodlog_grad(np.ascontiguousarray(proj(p_work)), gk, alpha,
                                                 beta, inst.theta, inst.gamma,
                                                 inst.bandwidth_hz, w_rate, w, False)
                    grad_scale = max(float(np.abs(gq).max()), 1e-300)
                # the log-metric stop bounds p * grad; the barrier-free polish
                # must leave the raw gradient small on low-power slots too
                tol = opts.inner_tol * grad_scale * (1e-3 if barrier == 0.0 else 1.0)
                res = concave_max(value_grad, proj, p_work, grad_tol=tol,
                                  max_iter=opts.inner_max_iter,
                                  metric=lambda p: p)
                p_work = res.x
                report.inner_iteration_totals += res.iterations
            p_cand = p_work
            cand_val = _lnprodee(inst, p_cand, k)
            if np.isfinite(cand_val) and cand_val >= _lnprodee(inst, p, k):
                p = p_cand
            k = model.best_schedule(inst, p, "prod")
            new_obj = _lnprodee(inst, p, k)
            report.objective_trace.append(new_obj)
            report.iterations = i
            settled = abs(new_obj - obj) / max(abs(obj), 1e-300) < opts.rel_tol
            obj = new_obj
            if settled:
                alloc = make_allocation(inst, p, k, snap_zero=False, validate=False)
                report.kkt_residual = prodee_kkt_residual(inst, alloc)
                if report.kkt_residual <= opts.kkt_target:
                    report.converged = True
                    report.stop_reason = "tolerance"
                    break
        else:
            report.stop_reason = "max_iter"
    except InnerSolveError as exc:
        raise SolverError(f"log-product inner engine failed: {exc}", report=report) from exc
    alloc = make_allocation(inst, p, k, snap_zero=False)
    if np.isnan(report.kkt_residual):
        report.kkt_residual = prodee_kkt_residual(inst, alloc)
    return alloc, report


def solve_prodee_nl(inst: NetworkInstance, opts: ProdEeOptions | None = None):
    """Noise-limited log-product solve on the per-slot-peak box."""
    opts = opts or ProdEeOptions()
    _check_structural(inst)
    nl_opts = SumEeOptions(outer_max_iter=opts.outer_max_iter, rel_tol=opts.rel_tol,
                           inner_tol=opts.inner_tol, inner_max_iter=opts.inner_max_iter)
    try:
        return _solve_nl_separable(inst, nl_opts, schedule_mode="prod", log_objective=True)
    except InnerSolveError as exc:
        raise SolverError(f"noise-limited log-product inner engine failed: {exc}") from exc
