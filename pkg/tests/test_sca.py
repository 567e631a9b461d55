"""Log rate bound, its coefficients, and the closed-form gradients."""

import numpy as np
import pytest

from eecoord import (LogPowerVector, ScaCoefficients, alpha_beta, bound_f, bound_g, bound_h,
                     bound_phi, gee, grad_gee_q, grad_h_q, make_allocation, prod_ee_log,
                     sum_rate)
from eecoord import model
from eecoord.sca import grad_lnprodee_q

from conftest import random_instance


class TestAlphaBeta:
    def test_reference_points(self):
        a, b = alpha_beta(1.0)
        assert (a, b) == (0.5, 1.0)
        a, b = alpha_beta(3.0)
        assert a == pytest.approx(0.75)
        assert b == pytest.approx(2.0 - 0.75 * np.log2(3.0))
        assert alpha_beta(0.0) == (0.0, 0.0)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            alpha_beta(-1.0)
        with pytest.raises(ValueError):
            alpha_beta(np.nan)

    def test_bound_inequality_and_tightness(self, rng):
        z = rng.uniform(0.0, 1e6, 2000)
        zbar = rng.uniform(0.0, 1e6, 2000)
        a, b = alpha_beta(zbar)
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = np.where(a > 0.0, a * np.log2(np.maximum(z, 1e-300)) + b, b)
            rhs = np.where((z == 0.0) & (a > 0.0), -np.inf, rhs)
        lhs = np.log2(1.0 + z)
        assert np.all(lhs >= rhs - 1e-12 * np.maximum(1.0, np.abs(rhs)))
        at = np.log2(1.0 + zbar)
        a2, b2 = alpha_beta(zbar)
        with np.errstate(divide="ignore", invalid="ignore"):
            tight = np.where(zbar > 0, a2 * np.log2(np.maximum(zbar, 1e-300)) + b2, 0.0)
        np.testing.assert_allclose(tight, np.where(zbar > 0, at, 0.0), rtol=1e-12)

    def test_coefficients_invariant(self, rng):
        zbar = rng.uniform(0.0, 100.0, (3, 4))
        c = ScaCoefficients.at(zbar)
        np.testing.assert_allclose(c.alpha, zbar / (1.0 + zbar), rtol=1e-15)


def _tight_setup(rng, mode="per-bs"):
    inst = random_instance(rng, mode=mode)
    p = np.maximum(rng.uniform(0, 1, (3, 4)) * inst.caps, inst.floors)
    k = model.best_schedule(inst, p)
    coeffs = ScaCoefficients.at(model.sinr_matrix(inst, p, k))
    return inst, p, k, coeffs


class TestBounds:
    def test_tight_at_expansion(self, rng):
        for _ in range(10):
            inst, p, k, coeffs = _tight_setup(rng)
            q = np.log(p)
            alloc = make_allocation(inst, p, k, snap_zero=False, validate=False)
            np.testing.assert_allclose(bound_h(inst, k, coeffs, q), gee(inst, alloc),
                                       rtol=1e-12)

    def test_zero_coefficients_zero_bound(self, rng):
        inst, p, k, _ = _tight_setup(rng)
        zero = ScaCoefficients.at(np.zeros((3, 4)))
        q = np.log(p)
        assert bound_f(inst, k, zero, q) == 0.0
        assert bound_h(inst, k, zero, q) == 0.0

    def test_bound_direction_random_coeffs(self, rng):
        # minorant property, slot by slot: the bounded rate term never
        # exceeds log2(1 + SINR) anywhere
        for _ in range(20):
            inst, p, k, _ = _tight_setup(rng)
            coeffs = ScaCoefficients.at(rng.uniform(0.0, 50.0, (3, 4)))
            q = np.log(np.maximum(rng.uniform(0, 1, (3, 4)) * inst.caps, inst.floors))
            sinr = model.sinr_matrix(inst, np.exp(q), k)
            with np.errstate(divide="ignore"):
                bounded = np.where(
                    coeffs.alpha > 0.0,
                    coeffs.alpha * np.log2(np.maximum(sinr, 1e-300)) + coeffs.beta,
                    coeffs.beta)
            true_term = np.log2(1.0 + sinr)
            assert np.all(bounded <= true_term + 1e-9 * np.maximum(1.0, np.abs(true_term)))
            alloc = make_allocation(inst, np.exp(q), k, snap_zero=False, validate=False)
            assert bound_f(inst, k, coeffs, q) <= sum_rate(inst, alloc) + 1e-9

    def test_bound_g_value(self, rng):
        inst, p, k, _ = _tight_setup(rng)
        q = np.log(p)
        np.testing.assert_allclose(bound_g(inst, q),
                                   float((inst.theta + inst.gamma * p).sum()), rtol=1e-14)

    def test_phi_tight_and_minorant(self, rng):
        for _ in range(10):
            inst, p, k, coeffs = _tight_setup(rng)
            q = np.log(p)
            alloc = make_allocation(inst, p, k, snap_zero=False, validate=False)
            np.testing.assert_allclose(bound_phi(inst, k, coeffs, q),
                                       prod_ee_log(inst, alloc), rtol=1e-10, atol=1e-12)
            # another feasible point, same coefficients: minorant when defined
            q2 = np.log(np.maximum(rng.uniform(0.2, 1, (3, 4)) * inst.caps, inst.floors))
            alloc2 = make_allocation(inst, np.exp(q2), k, snap_zero=False, validate=False)
            try:
                phi2 = bound_phi(inst, k, coeffs, q2)
            except ValueError:
                continue
            assert phi2 <= prod_ee_log(inst, alloc2) + 1e-9

    def test_phi_domain_error(self, rng):
        inst, p, k, coeffs = _tight_setup(rng)
        # crushing one BS's power drives its bounded rate term negative
        q = np.log(np.maximum(p, inst.floors))
        q[0] = np.log(inst.floors[0])
        with pytest.raises(ValueError):
            bound_phi(inst, k, coeffs, q)


def _fd(fun, q, h=1e-6):
    g = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        qp = q.copy()
        qp[idx] += h
        qm = q.copy()
        qm[idx] -= h
        g[idx] = (fun(qp) - fun(qm)) / (2 * h)
    return g


class TestGradients:
    def test_grad_h_matches_finite_differences(self, rng):
        for _ in range(10):
            inst, p, k, coeffs = _tight_setup(rng)
            q = np.log(p)
            num = _fd(lambda qq: bound_h(inst, k, coeffs, qq), q)
            ana = grad_h_q(inst, k, coeffs, q)
            np.testing.assert_allclose(ana, num, rtol=1e-5, atol=1e-8 * np.abs(ana).max())

    def test_grad_gee_matches_finite_differences(self, rng):
        for _ in range(10):
            inst, p, k, _ = _tight_setup(rng)
            q = np.log(p)

            def gee_of(qq):
                alloc = make_allocation(inst, np.exp(qq), k, snap_zero=False, validate=False)
                return gee(inst, alloc)

            num = _fd(gee_of, q)
            ana = grad_gee_q(inst, k, q)
            np.testing.assert_allclose(ana, num, rtol=1e-5, atol=1e-8 * np.abs(ana).max())

    def test_grads_coincide_at_expansion(self, rng):
        for _ in range(10):
            inst, p, k, coeffs = _tight_setup(rng)
            q = np.log(p)
            np.testing.assert_allclose(grad_h_q(inst, k, coeffs, q), grad_gee_q(inst, k, q),
                                       rtol=1e-9)

    def test_single_bs_leakage_free_formula(self, rng):
        inst = random_instance(rng, m_bs=1, n_sub=3, users_per_bs=2)
        p = np.maximum(rng.uniform(0, 1, (1, 3)) * inst.caps, inst.floors)
        k = model.best_schedule(inst, p)
        coeffs = ScaCoefficients.at(model.sinr_matrix(inst, p, k))
        q = np.log(p)
        g_val = bound_g(inst, q)
        h_val = bound_h(inst, k, coeffs, q)
        expected = ((inst.bandwidth_hz / np.log(2)) * coeffs.alpha / g_val
                    - inst.gamma * p * h_val / g_val)
        np.testing.assert_allclose(grad_h_q(inst, k, coeffs, q), expected, rtol=1e-12)

    def test_lnprodee_grad_matches_finite_differences(self, rng):
        for _ in range(5):
            inst, p, k, _ = _tight_setup(rng)
            q = np.log(p)

            def val(qq):
                alloc = make_allocation(inst, np.exp(qq), k, snap_zero=False, validate=False)
                return prod_ee_log(inst, alloc)

            num = _fd(val, q)
            ana = grad_lnprodee_q(inst, k, q)
            np.testing.assert_allclose(ana, num, rtol=1e-5, atol=1e-10)


class TestConcavityGeometry:
    def test_lemma_midpoint_concavity(self, rng):
        # f(exp(q)) midpoint-concave, g(exp(q)) midpoint-convex along segments
        for _ in range(50):
            inst, p, k, coeffs = _tight_setup(rng)
            q0 = np.log(np.maximum(rng.uniform(0, 1, (3, 4)) * inst.caps, inst.floors))
            q1 = np.log(np.maximum(rng.uniform(0, 1, (3, 4)) * inst.caps, inst.floors))
            qm = 0.5 * (q0 + q1)
            f0, f1, fm = (bound_f(inst, k, coeffs, q) for q in (q0, q1, qm))
            assert fm >= 0.5 * (f0 + f1) - 1e-6 * max(1.0, abs(fm))
            g0, g1, gm = (bound_g(inst, q) for q in (q0, q1, qm))
            assert gm <= 0.5 * (g0 + g1) + 1e-9 * gm

    def test_rate_side_nonnegative_at_expansion(self, rng):
        for _ in range(10):
            inst, p, k, coeffs = _tight_setup(rng)
            assert bound_f(inst, k, coeffs, np.log(p)) >= 0.0


class TestLogPowerVector:
    def test_round_trip_with_floor(self, rng):
        inst = random_instance(rng)
        p = rng.uniform(0, 1, (3, 4)) * inst.caps
        p[0, 0] = 0.0
        lpv = LogPowerVector.from_power(p, inst.floors)
        back = lpv.to_power()
        assert back[0, 0] == pytest.approx(inst.floors[0, 0])
        np.testing.assert_allclose(back[p > 0], p[p > 0], rtol=1e-15)
