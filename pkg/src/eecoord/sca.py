"""Logarithmic rate-bound machinery and log-power-space gradients.

The central inequality is ``log2(1 + z) >= alpha * log2(z) + beta`` for
``z, zbar >= 0`` with ``alpha = zbar / (1 + zbar)`` and ``beta`` chosen so
the bound is tight at ``z = zbar`` (conventions ``log2(0) = -inf`` and
``0 * log2(0) = 0``, so ``zbar = 0`` yields ``alpha = beta = 0``).
Substituting the bound per slot makes the rate side concave in
``q = ln p``, which the solvers exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import NetworkInstance, gather_gains, scheduled_weights


def alpha_beta(zbar):
    """Expansion coefficients of the log bound at reference SINR ``zbar``.

    Works elementwise on arrays.  Raises on negative or NaN input.
    """
    z = np.asarray(zbar, dtype=float)
    if np.any(np.isnan(z)) or np.any(z < 0.0):
        raise ValueError("reference SINR must be finite and >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = z / (1.0 + z)
        beta = np.where(z > 0.0, np.log2(1.0 + z) - alpha * np.log2(np.maximum(z, 1e-300)), 0.0)
    if np.ndim(zbar) == 0:
        return float(alpha), float(beta)
    return alpha, beta


@dataclass(frozen=True)
class ScaCoefficients:
    """Per-slot ``(alpha, beta)`` pairs plus the SINR point they expand."""

    alpha: np.ndarray
    beta: np.ndarray
    zbar: np.ndarray

    @classmethod
    def at(cls, zbar) -> "ScaCoefficients":
        z = np.array(zbar, dtype=float)
        a, b = alpha_beta(z)
        return cls(np.asarray(a), np.asarray(b), z)


@dataclass(frozen=True)
class LogPowerVector:
    """Log-space powers ``q = ln p`` with the positive floor that replaced 0."""

    q: np.ndarray
    p_floor: np.ndarray

    @classmethod
    def from_power(cls, p, p_floor) -> "LogPowerVector":
        p = np.asarray(p, dtype=float)
        floor = np.broadcast_to(np.asarray(p_floor, dtype=float), p.shape)
        return cls(np.log(np.maximum(p, floor)), np.array(floor))

    def to_power(self) -> np.ndarray:
        return np.exp(self.q)


def _as_q_power(q):
    q = np.asarray(q, dtype=float)
    return np.ascontiguousarray(np.exp(q))


def bound_f(inst: NetworkInstance, schedule, coeffs: ScaCoefficients, q) -> float:
    """Rate-side minorant ``B * sum(alpha * log2(SINR) + beta)`` in bit/s."""
    p = _as_q_power(q)
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    f, _, _ = kernels.fg_grad(p, gk, coeffs.alpha, coeffs.beta, inst.theta, inst.gamma,
                              inst.bandwidth_hz, 0.0, False)
    return f


def bound_g(inst: NetworkInstance, q) -> float:
    """Power-side value ``sum(theta + gamma * exp(q))`` in W."""
    p = np.exp(np.asarray(q, dtype=float))
    return float((inst.theta + inst.gamma * p).sum())


def bound_h(inst: NetworkInstance, schedule, coeffs: ScaCoefficients, q) -> float:
    """Fractional minorant ``f / g`` of the global energy efficiency."""
    return bound_f(inst, schedule, coeffs, q) / bound_g(inst, q)


def grad_h_q(inst: NetworkInstance, schedule, coeffs: ScaCoefficients, q) -> np.ndarray:
    """Closed-form gradient of ``bound_h`` with respect to ``q``, (M, N)."""
    p = _as_q_power(q)
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    f, g, _ = kernels.fg_grad(p, gk, coeffs.alpha, coeffs.beta, inst.theta, inst.gamma,
                              inst.bandwidth_hz, 0.0, False)
    h = f / g
    # d(f/g)/dq = (df/dq - h * dg/dq) / g; fg_grad with pi=h yields the numerator
    _, _, grad = kernels.fg_grad(p, gk, coeffs.alpha, coeffs.beta, inst.theta, inst.gamma,
                                 inst.bandwidth_hz, h, False)
    return grad / g


def grad_gee_q(inst: NetworkInstance, schedule, q) -> np.ndarray:
    """Closed-form gradient of the exact GEE with respect to ``q``, (M, N)."""
    p = _as_q_power(q)
    gk = gather_gains(inst, np.asarray(schedule, dtype=np.intp))
    zeros = np.zeros_like(p)
    f, g, _ = kernels.fg_grad(p, gk, zeros, zeros, inst.theta, inst.gamma,
                              inst.bandwidth_hz, 0.0, True)
    _, _, grad = kernels.fg_grad(p, gk, zeros, zeros, inst.theta, inst.gamma,
                                 inst.bandwidth_hz, f / g, True)
    return grad / g


def bound_phi(inst: NetworkInstance, schedule, coeffs: ScaCoefficients, q) -> float:
    """Log-product minorant; ``ValueError`` when a bounded rate term is <= 0."""
    p = _as_q_power(q)
    k = np.asarray(schedule, dtype=np.intp)
    gk = gather_gains(inst, k)
    w = scheduled_weights(inst, k)
    phi, _ = kernels.prodlog_grad(p, gk, coeffs.alpha, coeffs.beta, inst.theta, inst.gamma,
                                  inst.bandwidth_hz, w, w, False)
    if not np.isfinite(phi):
        raise ValueError("bounded rate term is non-positive at this point")
    return phi


def grad_lnprodee_q(inst: NetworkInstance, schedule, q) -> np.ndarray:
    """Gradient of the exact log-product objective with respect to ``q``."""
    p = _as_q_power(q)
    k = np.asarray(schedule, dtype=np.intp)
    gk = gather_gains(inst, k)
    w = scheduled_weights(inst, k)
    zeros = np.zeros_like(p)
    _, grad = kernels.prodlog_grad(p, gk, zeros, zeros, inst.theta, inst.gamma,
                                   inst.bandwidth_hz, w, w, True)
    return grad
