"""Shared instance factories for the test suite."""

import numpy as np
import pytest

from eecoord import NetworkInstance, PerBsPower, PerSubcarrierPower


def random_instance(rng, m_bs=3, n_sub=4, users_per_bs=2, mode="per-bs", nl=False,
                    cross=0.3, bandwidth_hz=1.8e5, uniform_weights=False):
    """Wireless-like random instance: own-cell links ~3x stronger than cross.

    ``nl=True`` zeroes all cross gains, making the interference-aware and
    noise-limited objectives coincide.
    """
    n_users = m_bs * users_per_bs
    gains = (rng.exponential(1.0, (m_bs, n_users, n_sub))
             * rng.lognormal(0.0, 1.0, (m_bs, n_users, 1)) * 20.0)
    own = np.zeros((m_bs, n_users), dtype=bool)
    for m in range(m_bs):
        own[m, m * users_per_bs:(m + 1) * users_per_bs] = True
    gains *= np.where(own[:, :, None], 1.0, 0.0 if nl else cross)
    cells = tuple(tuple(range(m * users_per_bs, (m + 1) * users_per_bs))
                  for m in range(m_bs))
    theta = rng.uniform(0.2, 1.0, (m_bs, n_sub))
    gamma = rng.uniform(1.0, 4.0, (m_bs, n_sub))
    budget = rng.uniform(0.5, 4.0, m_bs)
    if mode == "per-bs":
        constraint = PerBsPower(budget)
    else:
        constraint = PerSubcarrierPower(np.tile((budget / n_sub)[:, None], (1, n_sub)))
    if uniform_weights:
        weights = np.full((m_bs, n_users, n_sub), 1.0 / (m_bs * n_sub))
    else:
        weights = rng.uniform(0.5, 1.5, (m_bs, n_users, n_sub)) / (m_bs * n_sub)
    return NetworkInstance(m_bs=m_bs, n_sub=n_sub, bandwidth_hz=bandwidth_hz, cells=cells,
                           gains=gains, theta=theta, gamma=gamma, constraint=constraint,
                           weights=weights)


def single_slot_instance(gain=10.0, theta=1.0, gamma=1.0, bandwidth_hz=1.0, p_max=10.0):
    """The one-BS, one-subcarrier instance with a known analytic optimum."""
    return NetworkInstance(m_bs=1, n_sub=1, bandwidth_hz=bandwidth_hz, cells=((0,),),
                           gains=np.array([[[gain]]]), theta=theta, gamma=gamma,
                           constraint=PerBsPower(np.array([p_max])), weights=1.0)


def monotone_ok(trace, slack=1e-9):
    tr = np.asarray(trace, dtype=float)
    if tr.size < 2:
        return True
    return bool(np.all(np.diff(tr) >= -slack * np.abs(tr[:-1])))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
