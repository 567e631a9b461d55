"""Domain types and energy-efficiency metrics for a coordinated OFDMA cluster.

A :class:`NetworkInstance` is an immutable problem statement: a cluster of
``m_bs`` base stations serving disjoint user sets on ``n_sub`` shared
subcarriers, with noise-normalised channel gains (so the interference
denominator carries an exact 1), a per-slot affine power model
``theta + gamma * p`` and either a per-BS or a per-subcarrier radiated
power limit.  An :class:`Allocation` is a candidate solution: one transmit
power and one scheduled user per (BS, subcarrier) slot.

All operations here are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import numpy as np

from . import kernels

ZERO_SNAP_W = 1e-15  # powers below this are reported as exactly 0 W
FEAS_RTOL = 1e-9  # relative slack when checking power constraints


class SolverError(RuntimeError):
    """Raised when a solver's inner engine fails; carries a partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _freeze(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PerBsPower:
    """Per-BS radiated power budget: ``sum_n p[m, n] <= p_max[m]``."""

    p_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_max", _freeze(np.atleast_1d(self.p_max)))
        if not np.all(self.p_max > 0.0):
            raise ValueError("per-BS power limits must be positive")

    def caps(self, n_sub: int) -> np.ndarray:
        """Largest feasible single-slot power: the whole budget of the BS."""
        return np.repeat(self.p_max[:, None], n_sub, axis=1)

    def slot_budget(self, n_sub: int) -> np.ndarray:
        """Nominal per-slot share of the budget (even split)."""
        return np.repeat(self.p_max[:, None] / n_sub, n_sub, axis=1)

    def feasible(self, p: np.ndarray, rtol: float = FEAS_RTOL) -> bool:
        return bool(
            np.all(p >= -rtol * self.p_max[:, None])
            and np.all(p.sum(axis=1) <= self.p_max * (1.0 + rtol))
        )

    def max_power(self, n_sub: int) -> np.ndarray:
        return self.slot_budget(n_sub).copy()


@dataclass(frozen=True)
class PerSubcarrierPower:
    """Per-slot radiated power box: ``0 <= p[m, n] <= p_max[m, n]``."""

    p_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_max", _freeze(np.atleast_2d(self.p_max)))
        if not np.all(self.p_max > 0.0):
            raise ValueError("per-subcarrier power limits must be positive")

    def caps(self, n_sub: int) -> np.ndarray:
        return np.asarray(self.p_max)

    def slot_budget(self, n_sub: int) -> np.ndarray:
        return np.asarray(self.p_max)

    def feasible(self, p: np.ndarray, rtol: float = FEAS_RTOL) -> bool:
        return bool(np.all(p >= -rtol * self.p_max) and np.all(p <= self.p_max * (1.0 + rtol)))

    def max_power(self, n_sub: int) -> np.ndarray:
        return self.p_max.copy()


PowerConstraint = PerBsPower | PerSubcarrierPower


@dataclass(frozen=True)
class NetworkInstance:
    """Immutable problem statement for one resource-allocation run.

    ``gains[q, s, n]`` is ``|H|^2 / noise`` for transmitter ``q``, user
    ``s`` and subcarrier ``n`` (units 1/W); ``cells`` partitions the user
    indices among the base stations.
    """

    m_bs: int
    n_sub: int
    bandwidth_hz: float
    cells: tuple[tuple[int, ...], ...]
    gains: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    constraint: PowerConstraint
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(tuple(int(s) for s in c) for c in self.cells))
        gains = _freeze(self.gains)
        n_users = gains.shape[1]
        theta = _freeze(np.broadcast_to(np.asarray(self.theta, dtype=float), (self.m_bs, self.n_sub)))
        gamma = _freeze(np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.m_bs, self.n_sub)))
        weights = _freeze(
            np.broadcast_to(np.asarray(self.weights, dtype=float), (self.m_bs, n_users, self.n_sub))
        )
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "weights", weights)

        if self.m_bs < 1 or self.n_sub < 1:
            raise ValueError("need at least one BS and one subcarrier")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth must be positive")
        if gains.shape != (self.m_bs, n_users, self.n_sub):
            raise ValueError(f"gains must have shape (m_bs, n_users, n_sub), got {gains.shape}")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0.0):
            raise ValueError("gains must be finite and non-negative")
        if not np.all(theta > 0.0):
            raise ValueError("static power theta must be positive")
        if not np.all(gamma >= 1.0):
            raise ValueError("amplifier loss gamma must be >= 1")
        if not np.all(weights > 0.0):
            raise ValueError("weights must be positive")
        if len(self.cells) != self.m_bs or any(len(c) == 0 for c in self.cells):
            raise ValueError("cells must assign a non-empty user set to every BS")
        flat = [s for c in self.cells for s in c]
        if sorted(flat) != list(range(n_users)):
            raise ValueError("cells must partition the user indices exactly once")

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]

    @cached_property
    def caps(self) -> np.ndarray:
        """Per-slot upper power bound implied by the constraint, (M, N)."""
        return self.constraint.caps(self.n_sub)

    @cached_property
    def floors(self) -> np.ndarray:
        """Per-slot positive power floor standing in for 'off' in log space."""
        return 1e-12 * self.constraint.slot_budget(self.n_sub)

    def serves(self, m: int, s: int) -> bool:
        return s in self.cells[m]

    def max_power_alloc(self) -> np.ndarray:
        """Full-power initial point: caps per slot, or an even budget split."""
        return self.constraint.max_power(self.n_sub)

    def cell_mask(self) -> np.ndarray:
        """Boolean (M, S) mask of which BS serves which user."""
        mask = np.zeros((self.m_bs, self.n_users), dtype=bool)
        for m, cell in enumerate(self.cells):
            mask[m, list(cell)] = True
        return mask


@dataclass(frozen=True)
class Allocation:
    """Candidate solution: per-slot transmit power and scheduled user."""

    power: np.ndarray
    schedule: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "power", _freeze(self.power))
        object.__setattr__(self, "schedule", _freeze(self.schedule, dtype=np.intp))


def make_allocation(inst: NetworkInstance, power, schedule, *, snap_zero: bool = True,
                    validate: bool = True) -> Allocation:
    """Build an :class:`Allocation`, snapping sub-``1e-15`` W powers to 0.

    Product-EE solutions keep structurally positive powers and pass
    ``snap_zero=False``.
    """
    p = np.array(power, dtype=float)
    if snap_zero:
        p[p < ZERO_SNAP_W] = 0.0
    k = np.asarray(schedule, dtype=np.intp)
    if validate:
        if p.shape != (inst.m_bs, inst.n_sub) or k.shape != (inst.m_bs, inst.n_sub):
            raise ValueError("power and schedule must both be (m_bs, n_sub)")
        if np.any(p < 0.0):
            raise ValueError("powers must be non-negative")
        if not inst.constraint.feasible(p):
            raise ValueError("powers violate the instance power constraint")
        for m in range(inst.m_bs):
            if not set(np.unique(k[m])).issubset(set(inst.cells[m])):
                raise ValueError(f"schedule row {m} contains users not served by BS {m}")
    return Allocation(p, k)


@dataclass
class SolverReport:
    """Convergence bookkeeping shared by all solvers.

    ``objective_trace[i]`` is the objective after outer iteration ``i+1``;
    solvers with a monotone-improvement guarantee keep it non-decreasing.
    """

    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = "max_iter"
    kkt_residual: float = float("nan")
    inner_iteration_totals: int = 0


# ---------------------------------------------------------------------------
# vectorised internals shared with the solvers


def gather_gains(inst: NetworkInstance, schedule: np.ndarray) -> np.ndarray:
    """Scheduled-gain tensor ``gk[q, m, n] = gains[q, schedule[m, n], n]``."""
    n_idx = np.arange(inst.n_sub)
    return np.ascontiguousarray(inst.gains[:, schedule, n_idx])


def scheduled_weights(inst: NetworkInstance, schedule: np.ndarray) -> np.ndarray:
    """Per-slot weight of the scheduled user, (M, N)."""
    m_idx = np.arange(inst.m_bs)[:, None]
    n_idx = np.arange(inst.n_sub)[None, :]
    return np.ascontiguousarray(inst.weights[m_idx, schedule, n_idx])


def sinr_matrix(inst: NetworkInstance, p: np.ndarray, schedule: np.ndarray) -> np.ndarray:
    """SINR of every scheduled slot, (M, N)."""
    sinr, _ = kernels.sinr_and_den(np.ascontiguousarray(p, dtype=float),
                                   gather_gains(inst, schedule))
    return sinr


def rate_matrix(inst: NetworkInstance, p: np.ndarray, schedule: np.ndarray) -> np.ndarray:
    """Achievable rate of every scheduled slot in bit/s, (M, N)."""
    return inst.bandwidth_hz * np.log2(1.0 + sinr_matrix(inst, p, schedule))


def all_user_sinr(inst: NetworkInstance, p: np.ndarray) -> np.ndarray:
    """SINR of every (BS, user, subcarrier) triple, (M, S, N).

    Entries with ``s`` not served by ``m`` are still computed (the serving
    hypothesis just moves ``m`` out of the interference sum); callers mask
    by cell.
    """
    p = np.asarray(p, dtype=float)
    total = np.einsum("ln,lsn->sn", p, inst.gains)
    own = p[:, None, :] * inst.gains
    den = 1.0 + total[None, :, :] - own
    return own / den


# ---------------------------------------------------------------------------
# public operations


def _check_indices(inst, m, s, n):
    if not (0 <= m < inst.m_bs and 0 <= n < inst.n_sub):
        raise IndexError(f"slot ({m}, {n}) out of range")
    if not (0 <= s < inst.n_users):
        raise IndexError(f"user {s} out of range")
    if not inst.serves(m, s):
        raise ValueError(f"user {s} is not served by BS {m}")


def sinr(inst: NetworkInstance, p, m: int, s: int, n: int) -> float:
    """SINR of BS ``m`` serving user ``s`` on subcarrier ``n`` for powers ``p``."""
    _check_indices(inst, m, s, n)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0):
        raise ValueError("powers must be non-negative")
    interference = float(np.dot(p[:, n], inst.gains[:, s, n]) - p[m, n] * inst.gains[m, s, n])
    return float(p[m, n] * inst.gains[m, s, n] / (1.0 + interference))


def rate(inst: NetworkInstance, p, m: int, s: int, n: int) -> float:
    """Achievable rate in bit/s: ``B * log2(1 + SINR)``."""
    return inst.bandwidth_hz * float(np.log2(1.0 + sinr(inst, p, m, s, n)))


def consumed_power_total(inst: NetworkInstance, p) -> float:
    """Network power consumption ``sum(theta + gamma * p)`` in W."""
    p = np.asarray(p, dtype=float)
    return float((inst.theta + inst.gamma * p).sum())


def gee(inst: NetworkInstance, alloc: Allocation) -> float:
    """Global energy efficiency: network sum-rate over consumed power (bit/s/W)."""
    rates = rate_matrix(inst, alloc.power, alloc.schedule)
    return float(rates.sum()) / consumed_power_total(inst, alloc.power)


def sum_rate(inst: NetworkInstance, alloc: Allocation) -> float:
    """Network sum-rate in bit/s."""
    return float(rate_matrix(inst, alloc.power, alloc.schedule).sum())


def sum_ee(inst: NetworkInstance, alloc: Allocation) -> float:
    """Weighted sum of per-slot energy efficiencies (bit/s/W)."""
    rates = rate_matrix(inst, alloc.power, alloc.schedule)
    w = scheduled_weights(inst, alloc.schedule)
    pc = inst.theta + inst.gamma * alloc.power
    return float((w * rates / pc).sum())


def prod_ee_log(inst: NetworkInstance, alloc: Allocation) -> float:
    """Log of the exponentially-weighted product of per-slot efficiencies.

    Raises :class:`ValueError` when any scheduled slot has zero rate (the
    product is then identically zero and its log undefined).
    """
    rates = rate_matrix(inst, alloc.power, alloc.schedule)
    if np.any(rates <= 0.0):
        raise ValueError("prod_ee_log needs strictly positive scheduled rates")
    w = scheduled_weights(inst, alloc.schedule)
    pc = inst.theta + inst.gamma * alloc.power
    return float((w * np.log(rates / pc)).sum())


def per_slot_ee(inst: NetworkInstance, alloc: Allocation) -> np.ndarray:
    """Unweighted per-slot energy efficiency ``R / (theta + gamma p)``, (M, N)."""
    rates = rate_matrix(inst, alloc.power, alloc.schedule)
    return rates / (inst.theta + inst.gamma * alloc.power)


def best_schedule(inst: NetworkInstance, p, objective: str = "rate") -> np.ndarray:
    """Optimal user per slot for fixed powers; ties break to the lowest index.

    ``objective`` selects the per-slot score: ``rate`` (plain rate),
    ``weighted_rate`` (``w * rate``) or ``prod`` (``w * ln(rate / (theta +
    gamma p))``, zero-rate candidates scoring ``-inf``).  With equal
    weights all three agree because the rate is monotone in the SINR.
    """
    p = np.asarray(p, dtype=float)
    sinr_all = all_user_sinr(inst, p)
    rates = inst.bandwidth_hz * np.log2(1.0 + sinr_all)
    if objective == "rate":
        score = rates
    elif objective == "weighted_rate":
        score = inst.weights * rates
    elif objective == "prod":
        pc = (inst.theta + inst.gamma * p)[:, None, :]
        with np.errstate(divide="ignore"):
            score = inst.weights * np.where(rates > 0.0, np.log(np.maximum(rates, 1e-300) / pc), -np.inf)
    else:
        raise ValueError(f"unknown scheduling objective {objective!r}")
    score = np.where(inst.cell_mask()[:, :, None], score, -np.inf)
    k = np.argmax(score, axis=1).astype(np.intp)
    # all served candidates at -inf (zero-rate slot in prod mode): lowest index wins
    dead = ~np.isfinite(np.max(score, axis=1))
    if np.any(dead):
        for m in range(inst.m_bs):
            k[m, dead[m]] = min(inst.cells[m])
    return k


def nl_best_schedule(inst: NetworkInstance, p, objective: str = "rate") -> np.ndarray:
    """Scheduling rule of the noise-limited regime (interference ignored).

    Same per-slot scores as :func:`best_schedule` but with own-gain rates.
    """
    p = np.asarray(p, dtype=float)
    rates = inst.bandwidth_hz * np.log2(1.0 + p[:, None, :] * inst.gains)
    if objective == "rate":
        score = rates
    elif objective == "weighted_rate":
        score = inst.weights * rates
    elif objective == "prod":
        pc = (inst.theta + inst.gamma * p)[:, None, :]
        with np.errstate(divide="ignore"):
            score = inst.weights * np.where(rates > 0.0,
                                            np.log(np.maximum(rates, 1e-300) / pc), -np.inf)
    else:
        raise ValueError(f"unknown scheduling objective {objective!r}")
    score = np.where(inst.cell_mask()[:, :, None], score, -np.inf)
    k = np.argmax(score, axis=1).astype(np.intp)
    dead = ~np.isfinite(np.max(score, axis=1))
    if np.any(dead):
        for m in range(inst.m_bs):
            k[m, dead[m]] = min(inst.cells[m])
    return k
