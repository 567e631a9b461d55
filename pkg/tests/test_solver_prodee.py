"""Log-product EE: structural positivity, monotone traces, NL variant."""

import numpy as np
import pytest

from eecoord import (NetworkInstance, PerBsPower, nl_slot_cap, prod_ee_log,
                     prodee_kkt_residual, solve_gee, solve_prodee, solve_prodee_nl)
from eecoord import model
from eecoord.solver_prodee import ProdEeOptions

from conftest import monotone_ok, random_instance, single_slot_instance


class TestSingleSlot:
    def test_same_optimizer_as_gee(self):
        # one slot: ln of the same ratio, identical maximiser
        inst = single_slot_instance()
        a_gee, _ = solve_gee(inst)
        a_prod, _ = solve_prodee(inst)
        assert a_prod.power[0, 0] == pytest.approx(a_gee.power[0, 0], abs=1e-3)


class TestStructure:
    def test_symmetric_two_slot_nl_equal_powers(self):
        gains = np.full((1, 1, 2), 4.0)
        inst = NetworkInstance(m_bs=1, n_sub=2, bandwidth_hz=1.0, cells=((0,),),
                               gains=gains, theta=1.0, gamma=1.0,
                               constraint=PerBsPower(np.array([0.6])), weights=1.0)
        alloc, _ = solve_prodee_nl(inst)
        assert alloc.power[0, 0] == pytest.approx(alloc.power[0, 1], rel=1e-6)

    def test_no_silent_slots(self, rng):
        for mode in ("per-bs", "per-subcarrier"):
            inst = random_instance(rng, mode=mode)
            alloc, _ = solve_prodee(inst)
            assert np.all(alloc.power >= inst.floors * 10.0)

    def test_structurally_dead_slot_rejected(self, rng):
        inst = random_instance(rng, m_bs=2, n_sub=2)
        gains = np.array(inst.gains)
        gains[0, list(inst.cells[0]), 0] = 0.0  # BS0, subcarrier 0: no usable user
        bad = NetworkInstance(m_bs=2, n_sub=2, bandwidth_hz=inst.bandwidth_hz,
                              cells=inst.cells, gains=gains, theta=inst.theta,
                              gamma=inst.gamma, constraint=inst.constraint,
                              weights=inst.weights)
        with pytest.raises(ValueError):
            solve_prodee(bad)
        with pytest.raises(ValueError):
            solve_prodee_nl(bad)

    def test_zero_rate_candidate_never_scheduled(self, rng):
        # a user with zero gain scores -inf under the product rule
        gains = np.array([[[0.0], [3.0]]])
        inst = NetworkInstance(m_bs=1, n_sub=1, bandwidth_hz=1.0, cells=((0, 1),),
                               gains=gains, theta=0.5, gamma=1.0,
                               constraint=PerBsPower(np.array([1.0])), weights=1.0)
        k = model.best_schedule(inst, np.array([[0.5]]), "prod")
        assert k[0, 0] == 1


class TestTraces:
    @pytest.mark.parametrize("mode", ["per-bs", "per-subcarrier"])
    def test_monotone_and_converged(self, rng, mode):
        for _ in range(5):
            inst = random_instance(rng, mode=mode)
            alloc, report = solve_prodee(inst, ProdEeOptions(outer_max_iter=120))
            assert monotone_ok(report.objective_trace)
            assert report.converged
            assert report.kkt_residual <= 1e-4
            assert prodee_kkt_residual(inst, alloc) <= 1.5e-4
            assert prod_ee_log(inst, alloc) == pytest.approx(report.objective_trace[-1],
                                                             rel=1e-9)


class TestNoiseLimited:
    def test_loose_budget_attains_peaks(self, rng):
        inst = random_instance(rng, m_bs=1, n_sub=3, nl=True)
        big = NetworkInstance(m_bs=1, n_sub=3, bandwidth_hz=inst.bandwidth_hz,
                              cells=inst.cells, gains=inst.gains, theta=inst.theta,
                              gamma=inst.gamma, constraint=PerBsPower(np.array([1e6])),
                              weights=inst.weights)
        alloc, _ = solve_prodee_nl(big)
        gk = model.gather_gains(big, alloc.schedule)
        own = np.einsum("mmn->mn", gk)
        for n in range(3):
            peak = nl_slot_cap(float(own[0, n]), float(big.theta[0, n] / big.gamma[0, n]))
            assert alloc.power[0, n] == pytest.approx(peak, rel=1e-9)

    def test_tiny_gain_slot_still_transmits(self, rng):
        gains = np.zeros((1, 1, 2))
        gains[0, 0] = [20.0, 1e-4]
        inst = NetworkInstance(m_bs=1, n_sub=2, bandwidth_hz=1.8e5, cells=((0,),),
                               gains=gains, theta=0.5, gamma=2.0,
                               constraint=PerBsPower(np.array([0.5])), weights=0.5)
        alloc, _ = solve_prodee_nl(inst)
        assert alloc.power[0, 1] > inst.floors[0, 1] * 10.0

    def test_matches_refined_grid_two_slots(self, rng):
        inst = random_instance(rng, m_bs=1, n_sub=2, nl=True, mode="per-bs")
        alloc, _ = solve_prodee_nl(inst)
        budget = float(np.asarray(inst.constraint.p_max)[0])
        gk = model.gather_gains(inst, alloc.schedule)
        own = np.einsum("mmn->mn", gk)[0]
        w = model.scheduled_weights(inst, alloc.schedule)[0]

        def value(p0, p1):
            with np.errstate(divide="ignore"):
                r0 = inst.bandwidth_hz * np.log2(1 + own[0] * p0)
                r1 = inst.bandwidth_hz * np.log2(1 + own[1] * p1)
                pc0 = inst.theta[0, 0] + inst.gamma[0, 0] * p0
                pc1 = inst.theta[0, 1] + inst.gamma[0, 1] * p1
                return (w[0] * np.log(np.maximum(r0, 1e-300) / pc0)
                        + w[1] * np.log(np.maximum(r1, 1e-300) / pc1))

        lo = np.full(2, 1e-9 * budget)
        hi = np.full(2, budget)
        best = -np.inf
        for _ in range(4):
            g0 = np.linspace(lo[0], hi[0], 201)
            g1 = np.linspace(lo[1], hi[1], 201)
            p0g, p1g = np.meshgrid(g0, g1, indexing="ij")
            vals = np.where(p0g + p1g <= budget, value(p0g, p1g), -np.inf)
            i = np.unravel_index(np.argmax(vals), vals.shape)
            best = max(best, float(vals[i]))
            span0 = (hi[0] - lo[0]) / 50.0
            span1 = (hi[1] - lo[1]) / 50.0
            lo = np.maximum([g0[i[0]] - span0, g1[i[1]] - span1], 1e-12 * budget)
            hi = [min(g0[i[0]] + span0, budget), min(g1[i[1]] + span1, budget)]
        val = prod_ee_log(inst, alloc)
        assert val >= best - 1e-6 * max(1.0, abs(best))
