"""Random network realisations: geometry, propagation and noise.

The layout is a hexagonal lattice of 27 base stations; the three
mutually-adjacent cells at the lattice centre coordinate their
transmissions, the remaining 24 only contribute average out-of-cluster
interference folded into each user's noise variance.  Users drop
uniformly inside their serving cell's hexagon.  Per coordinated link the
channel combines distance path loss, one log-normal shadowing draw shared
by all subcarriers, and i.i.d. unit-mean Rayleigh fading power per
subcarrier; gains are stored noise-normalised.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .model import Allocation, NetworkInstance, PerBsPower, PerSubcarrierPower, rate_matrix

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Drop parameters; the defaults describe a small LTE-like cluster."""

    n_sub: int = 16
    bandwidth_hz: float = 180e3
    users_per_bs: int = 3
    carrier_hz: float = 1.8e9
    ref_distance_m: float = 100.0
    pathloss_exp: float = 4.0
    shadowing_sigma_db: float = 8.0
    noise_figure_db: float = 3.0
    noise_psd_dbm_hz: float = -174.0
    p_out_dbm: float = float("-inf")  # -inf: isolated cluster
    theta_w: tuple[float, ...] = (0.25, 0.5, 0.75)
    gamma: float = 3.8
    inter_site_distance_m: float = 500.0
    seed: int = 0
    # instance realisation knobs (round-trip the CLI config)
    pmax_dbm: float = 35.0
    constraint: str = "per-subcarrier"  # or "per-bs"
    weight_profile: tuple[float, ...] | str = "uniform"

    def replace(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def free_space_gain(distance_m: float, carrier_hz: float) -> float:
    """Friis free-space power attenuation at ``distance_m`` (linear)."""
    lam = SPEED_OF_LIGHT / carrier_hz
    return (lam / (4.0 * np.pi * distance_m)) ** 2


def path_loss_linear(d_m, *, d0_m: float = 100.0, exponent: float = 4.0,
                     carrier_hz: float = 1.8e9):
    """Distance attenuation ``PL0 * (d0 / d) ** exponent`` (linear power gain).

    ``PL0`` is the free-space attenuation at the reference distance;
    distances below ``d0_m`` clamp to it.  Raises on non-positive input.
    """
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("distances must be positive")
    pl0 = free_space_gain(d0_m, carrier_hz)
    out = pl0 * (d0_m / np.maximum(d, d0_m)) ** exponent
    return float(out) if np.ndim(d_m) == 0 else out


def hex_layout(isd_m: float, n_bs: int = 27):
    """Hexagonal-lattice BS positions with the coordinated trio first.

    The three mutually adjacent sites around the lattice centre are moved
    to indices 0..2; the remaining positions are the nearest lattice
    points, ordered by (distance, angle) for determinism.  Returns
    ``(positions (n_bs, 2), coordinated_indices)``.
    """
    v1 = np.array([isd_m, 0.0])
    v2 = np.array([0.5 * isd_m, 0.5 * np.sqrt(3.0) * isd_m])
    centroid = (v1 + v2) / 3.0
    pts = []
    for i in range(-5, 6):
        for j in range(-5, 6):
            pts.append(i * v1 + j * v2 - centroid)
    pts = np.array(pts)
    dist = np.hypot(pts[:, 0], pts[:, 1])
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    order = np.lexsort((ang, np.round(dist, 6)))
    pts = pts[order][:n_bs]
    return pts, np.arange(3)


def _hexagon_contains(xy, center, isd_m):
    """Membership test for the Voronoi hexagon (apothem isd/2) at ``center``."""
    rel = np.asarray(xy, dtype=float) - center
    a = isd_m / 2.0
    for ang in (0.0, np.pi / 3.0, 2.0 * np.pi / 3.0):
        u = np.array([np.cos(ang), np.sin(ang)])
        if abs(float(rel @ u)) > a:
            return False
    return True


def _draw_in_hexagon(rng, center, isd_m):
    r = isd_m / np.sqrt(3.0)  # circumradius
    while True:
        xy = center + rng.uniform(-r, r, size=2)
        if _hexagon_contains(xy, center, isd_m):
            return xy


def noise_variance(cfg: ScenarioConfig, user_xy, shadow_out, bs_xy=None) -> float:
    """Per-subcarrier noise power in W: thermal plus out-of-cluster average.

    ``shadow_out`` holds one log-normal draw (linear) per uncoordinated BS;
    short-term fading is averaged out of the interference term.  With
    ``p_out_dbm = -inf`` only the thermal term remains.
    """
    thermal = (db_to_lin(cfg.noise_figure_db) * dbm_to_w(cfg.noise_psd_dbm_hz)
               * cfg.bandwidth_hz)
    p_out = 0.0 if np.isneginf(cfg.p_out_dbm) else dbm_to_w(cfg.p_out_dbm)
    if p_out == 0.0:
        return thermal
    if bs_xy is None:
        bs_xy, _ = hex_layout(cfg.inter_site_distance_m)
    out_xy = bs_xy[3:]
    d = np.hypot(*(np.asarray(user_xy) - out_xy).T)
    pl = path_loss_linear(d, d0_m=cfg.ref_distance_m, exponent=cfg.pathloss_exp,
                          carrier_hz=cfg.carrier_hz)
    return thermal + p_out * float((pl * np.asarray(shadow_out)).sum())


@dataclass(frozen=True)
class Scenario:
    """One geometric realisation plus the instance built from it."""

    config: ScenarioConfig
    bs_xy: np.ndarray
    user_xy: np.ndarray
    coordinated: np.ndarray
    uncoordinated: np.ndarray
    channel_sq: np.ndarray  # |H|^2, (3, S, N), before noise normalisation
    noise_w: np.ndarray  # per-user, per-subcarrier noise variance (S, N)
    instance: NetworkInstance = field(repr=False)

    def instance_for(self, pmax_dbm=None, constraint=None, weight_profile=None) -> NetworkInstance:
        """Rebuild the instance with a different power limit / weights."""
        cfg = self.config.replace(
            **{k: v for k, v in (("pmax_dbm", pmax_dbm), ("constraint", constraint),
                                 ("weight_profile", weight_profile)) if v is not None})
        return _build_instance(cfg, self.channel_sq, self.noise_w)


def _weights_for(cfg: ScenarioConfig, m_bs: int, n_users: int, n_sub: int) -> np.ndarray:
    if isinstance(cfg.weight_profile, str):
        if cfg.weight_profile != "uniform":
            raise ValueError(f"unknown weight profile {cfg.weight_profile!r}")
        return np.full((m_bs, n_users, n_sub), 1.0 / (m_bs * n_sub))
    triple = np.asarray(cfg.weight_profile, dtype=float)
    if triple.shape != (m_bs,):
        raise ValueError(f"per-BS weight profile needs {m_bs} entries")
    return np.broadcast_to(triple[:, None, None], (m_bs, n_users, n_sub)).copy()


def _build_instance(cfg: ScenarioConfig, channel_sq, noise_w) -> NetworkInstance:
    m_bs, n_users, n_sub = channel_sq.shape
    gains = channel_sq / noise_w[None, :, :]
    pmax_w = dbm_to_w(cfg.pmax_dbm)
    if cfg.constraint == "per-subcarrier":
        constraint = PerSubcarrierPower(np.full((m_bs, n_sub), pmax_w / n_sub))
    elif cfg.constraint == "per-bs":
        constraint = PerBsPower(np.full(m_bs, pmax_w))
    else:
        raise ValueError(f"unknown constraint mode {cfg.constraint!r}")
    cells = tuple(tuple(range(m * cfg.users_per_bs, (m + 1) * cfg.users_per_bs))
                  for m in range(m_bs))
    theta = np.asarray(cfg.theta_w, dtype=float)[:, None]
    return NetworkInstance(
        m_bs=m_bs, n_sub=n_sub, bandwidth_hz=cfg.bandwidth_hz, cells=cells, gains=gains,
        theta=np.broadcast_to(theta, (m_bs, n_sub)), gamma=cfg.gamma, constraint=constraint,
        weights=_weights_for(cfg, m_bs, n_users, n_sub))


def draw_scenario(cfg: ScenarioConfig, drop: int = 0) -> Scenario:
    """Draw one deterministic realisation for ``(cfg.seed, drop)``.

    The random stream is consumed in a fixed order (positions, coordinated
    shadowing, fading, uncoordinated shadowing) independent of the
    out-of-cluster power, so configs differing only in ``p_out_dbm`` share
    geometry and fading.
    """
    if len(cfg.theta_w) != 3:
        raise ValueError("theta_w must list the three coordinated static powers")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(drop,)))
    bs_xy, coord = hex_layout(cfg.inter_site_distance_m)
    m_bs = len(coord)
    n_users = m_bs * cfg.users_per_bs

    user_xy = np.empty((n_users, 2))
    for m in range(m_bs):
        for u in range(cfg.users_per_bs):
            user_xy[m * cfg.users_per_bs + u] = _draw_in_hexagon(
                rng, bs_xy[m], cfg.inter_site_distance_m)

    sigma = cfg.shadowing_sigma_db
    shadow_coord = 10.0 ** (rng.normal(0.0, sigma, size=(m_bs, n_users)) / 10.0)
    fading = rng.exponential(1.0, size=(m_bs, n_users, cfg.n_sub))
    shadow_out = 10.0 ** (rng.normal(0.0, sigma, size=(len(bs_xy) - m_bs, n_users)) / 10.0)

    d_coord = np.hypot(user_xy[None, :, 0] - bs_xy[:m_bs, None, 0],
                       user_xy[None, :, 1] - bs_xy[:m_bs, None, 1])
    pl = path_loss_linear(d_coord, d0_m=cfg.ref_distance_m, exponent=cfg.pathloss_exp,
                          carrier_hz=cfg.carrier_hz)
    channel_sq = pl[:, :, None] * shadow_coord[:, :, None] * fading

    noise = np.array([noise_variance(cfg, user_xy[s], shadow_out[:, s], bs_xy)
                      for s in range(n_users)])
    noise_w = np.repeat(noise[:, None], cfg.n_sub, axis=1)

    return Scenario(config=cfg, bs_xy=bs_xy, user_xy=user_xy, coordinated=coord,
                    uncoordinated=np.arange(3, len(bs_xy)), channel_sq=channel_sq,
                    noise_w=noise_w, instance=_build_instance(cfg, channel_sq, noise_w))


def avg_bs_efficiency(inst: NetworkInstance, alloc: Allocation, m: int) -> float:
    """Average per-subcarrier energy efficiency of BS ``m`` in bit/s/W."""
    rates = rate_matrix(inst, alloc.power, alloc.schedule)
    pc = inst.theta[m] + inst.gamma[m] * alloc.power[m]
    return float((rates[m] / pc).mean())
