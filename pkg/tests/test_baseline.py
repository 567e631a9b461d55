"""Full-power and sum-rate reference strategies."""

import numpy as np
import pytest

from eecoord import (GeeOptions, NetworkInstance, PerBsPower, gee, max_power,
                     solve_gee_nl, solve_sumrate, sum_rate, waterfill_bisect)
from eecoord import model

from conftest import monotone_ok, random_instance, single_slot_instance

LN2 = np.log(2.0)


class TestMaxPower:
    def test_per_subcarrier_hits_caps(self, rng):
        inst = random_instance(rng, mode="per-subcarrier")
        alloc, report = max_power(inst)
        np.testing.assert_array_equal(alloc.power, inst.caps)
        assert report.converged

    def test_per_bs_even_split(self):
        inst = NetworkInstance(m_bs=1, n_sub=16, bandwidth_hz=1.0, cells=((0,),),
                               gains=np.ones((1, 1, 16)), theta=0.5, gamma=1.0,
                               constraint=PerBsPower(np.array([16.0])), weights=1.0)
        alloc, _ = max_power(inst)
        np.testing.assert_allclose(alloc.power, 1.0)

    def test_schedule_matches_rate_rule(self, rng):
        inst = random_instance(rng, users_per_bs=3)
        alloc, _ = max_power(inst)
        np.testing.assert_array_equal(alloc.schedule,
                                      model.best_schedule(inst, inst.max_power_alloc(),
                                                          "rate"))


class TestSumRate:
    def test_single_link_full_power(self):
        inst = single_slot_instance()
        alloc, _ = solve_sumrate(inst)
        assert alloc.power[0, 0] == pytest.approx(10.0, rel=1e-9)

    def test_nl_matches_classical_waterfilling(self, rng):
        inst = random_instance(rng, m_bs=1, n_sub=4, nl=True, mode="per-bs")
        alloc, _ = solve_sumrate(inst, GeeOptions(mode="noise_limited"))
        gk = model.gather_gains(inst, alloc.schedule)
        own = np.einsum("mmn->mn", gk)[0]
        budget = float(np.asarray(inst.constraint.p_max)[0])
        with np.errstate(divide="ignore"):
            offsets = np.where(own > 0, 1.0 / own, np.inf)
        ref = waterfill_bisect(np.full(4, inst.bandwidth_hz / LN2), offsets, budget)
        np.testing.assert_allclose(alloc.power[0], ref.powers, rtol=1e-6, atol=1e-12)

    def test_power_model_irrelevant(self, rng):
        inst = random_instance(rng, mode="per-subcarrier")
        other = NetworkInstance(m_bs=3, n_sub=4, bandwidth_hz=inst.bandwidth_hz,
                                cells=inst.cells, gains=inst.gains,
                                theta=inst.theta * 7.0, gamma=np.minimum(inst.gamma * 2, 50),
                                constraint=inst.constraint, weights=inst.weights)
        a1, _ = solve_sumrate(inst)
        a2, _ = solve_sumrate(other)
        np.testing.assert_allclose(a1.power, a2.power, rtol=1e-9)

    def test_monotone_trace(self, rng):
        for mode in ("per-bs", "per-subcarrier"):
            inst = random_instance(rng, mode=mode)
            _, report = solve_sumrate(inst)
            assert monotone_ok(report.objective_trace)


class TestOrderings:
    def test_nl_dominance_relations(self, rng):
        # waterfilling beats flat allocation on sum-rate; the globally
        # optimal NL GEE solve beats both baselines on GEE
        for _ in range(5):
            inst = random_instance(rng, nl=True, mode="per-bs")
            a_sr, _ = solve_sumrate(inst, GeeOptions(mode="noise_limited"))
            a_mp, _ = max_power(inst)
            assert sum_rate(inst, a_sr) >= sum_rate(inst, a_mp) * (1 - 1e-9)
            a_gee, _ = solve_gee_nl(inst)
            assert gee(inst, a_gee) >= gee(inst, a_sr) * (1 - 1e-9)
            assert gee(inst, a_gee) >= gee(inst, a_mp) * (1 - 1e-9)
