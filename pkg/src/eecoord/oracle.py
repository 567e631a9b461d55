"""Exhaustive grid search over tiny instances, used as test ground truth.

Every slot's power ranges over {0} plus a geometric grid from the power
floor to the slot cap (energy-efficient optima often sit far below the
cap, so geometric spacing covers the decades).  For fixed powers the
optimal schedule separates per slot, so only the power grid is
enumerated; each candidate is scored under all four objectives at once by
the batch kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, model
from .model import Allocation, NetworkInstance, PerBsPower, make_allocation

OBJECTIVES = ("gee", "sumee", "prodee_log", "sumrate")


@dataclass
class GridBest:
    allocation: Allocation
    value: float


def _slot_levels(inst, points_per_dim, positive_only):
    caps = inst.caps
    floors = inst.floors
    levels = []
    for m in range(inst.m_bs):
        for n in range(inst.n_sub):
            geo = np.geomspace(floors[m, n], caps[m, n], points_per_dim)
            levels.append(geo if positive_only else np.concatenate(([0.0], geo)))
    return levels


def grid_search(inst: NetworkInstance, points_per_dim: int = 50,
                positive_only: bool = False, batch: int = 262144) -> dict[str, GridBest]:
    """Best allocation per objective over the full power grid.

    Guards: ``m_bs * n_sub <= 4`` and ``points_per_dim <= 200`` (the cost
    is exponential in the slot count).  ``positive_only`` drops the zero
    level (log-product searches).  Returns a dict keyed by
    ``gee | sumee | prodee_log | sumrate``.
    """
    n_slots = inst.m_bs * inst.n_sub
    if n_slots > 4:
        raise ValueError("grid_search is restricted to at most 4 power slots")
    if points_per_dim > 200:
        raise ValueError("points_per_dim capped at 200")
    levels = _slot_levels(inst, points_per_dim, positive_only)
    n_levels = np.array([len(v) for v in levels])
    total = int(np.prod(n_levels))

    max_users = max(len(c) for c in inst.cells)
    users = np.zeros((inst.m_bs, max_users), dtype=np.int64)
    u_count = np.zeros(inst.m_bs, dtype=np.int64)
    for m, cell in enumerate(inst.cells):
        users[m, :len(cell)] = cell
        u_count[m] = len(cell)
    gains = np.ascontiguousarray(inst.gains)
    weights = np.ascontiguousarray(inst.weights)

    best = {name: (-np.inf, None) for name in OBJECTIVES}
    for start in range(0, total, batch):
        idx = np.arange(start, min(start + batch, total))
        digits = np.empty((idx.size, n_slots), dtype=np.intp)
        rem = idx.copy()
        for j in range(n_slots - 1, -1, -1):
            digits[:, j] = rem % n_levels[j]
            rem //= n_levels[j]
        p_flat = np.stack([levels[j][digits[:, j]] for j in range(n_slots)], axis=1)
        if isinstance(inst.constraint, PerBsPower):
            per_bs = p_flat.reshape(idx.size, inst.m_bs, inst.n_sub).sum(axis=2)
            feas = np.all(per_bs <= np.asarray(inst.constraint.p_max)[None, :] * (1 + 1e-12),
                          axis=1)
            if not np.any(feas):
                continue
            p_flat = p_flat[feas]
        p = np.ascontiguousarray(p_flat.reshape(-1, inst.m_bs, inst.n_sub))
        scores = kernels.grid_scores(p, gains, inst.theta, inst.gamma, inst.bandwidth_hz,
                                     weights, users, u_count)
        for name, vals in zip(OBJECTIVES, scores):
            b = int(np.argmax(vals))
            if vals[b] > best[name][0]:
                best[name] = (float(vals[b]), p[b].copy())

    out = {}
    for name, (val, p_best) in best.items():
        if p_best is None or not np.isfinite(val):
            if name == "prodee_log":
                continue  # no strictly positive candidate scored (zero level grid)
            raise RuntimeError(f"grid produced no feasible candidate for {name}")
        mode = {"gee": "rate", "sumrate": "rate", "sumee": "weighted_rate",
                "prodee_log": "prod"}[name]
        k_best = model.best_schedule(inst, p_best, mode)
        out[name] = GridBest(make_allocation(inst, p_best, k_best, snap_zero=False), val)
    return out
