"""V2I and V2V link rates.

Path loss is the urban macro log-distance model with Rayleigh (unit-mean
exponential power) fading. V2V links carry a beam-alignment discount.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class LinkKind(Enum):
    V2I_UP = "v2i_up"
    V2I_DOWN = "v2i_down"
    V2V_UP = "v2v_up"
    V2V_DOWN = "v2v_down"

    @property
    def is_v2v(self) -> bool:
        return self in (LinkKind.V2V_UP, LinkKind.V2V_DOWN)


@dataclass(frozen=True)
class LinkSpec:
    kind: LinkKind
    bandwidth: float  # per-channel, Hz
    tx_power: float  # W
    noise_power: float  # W
    interference: float = 0.0
    alignment_loss: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("per-channel bandwidth must be > 0")
        if self.tx_power < 0 or self.interference < 0:
            raise ValueError("tx_power and interference must be >= 0")
        if not self.noise_power > 0:
            raise ValueError("noise power must be > 0")
        if not 0.0 <= self.alignment_loss < 1.0:
            raise ValueError("alignment loss must lie in [0, 1)")
        if self.alignment_loss and not self.kind.is_v2v:
            raise ValueError("alignment loss applies to V2V links only")


def path_loss_db(distance, intercept=128.1, slope=37.6):
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return intercept + slope * np.log10(d / 1000.0)


def noise_power(bandwidth: float, density_dbm_hz: float = -174.0) -> float:
    """Thermal noise in W over ``bandwidth`` Hz."""
    return 10.0 ** ((density_dbm_hz + 10.0 * np.log10(bandwidth) - 30.0) / 10.0)


def channel_gain(distance, rng=None, fading=True, intercept=128.1, slope=37.6, size=None):
    """Linear power gain; ``size`` draws independent fading per channel."""
    pl = path_loss_db(distance, intercept, slope)
    gain = 10.0 ** (-pl / 10.0)
    if fading:
        if rng is None:
            raise ValueError("fading requires an rng")
        shape = np.shape(gain) if size is None else size
        gain = gain * rng.exponential(1.0, size=shape)
    return gain


def per_channel_rate(link: LinkSpec, gain):
    """Shannon rate of one channel in bits/s."""
    snr = link.tx_power * np.asarray(gain, dtype=float) / (link.noise_power + link.interference)
    return (1.0 - link.alignment_loss) * link.bandwidth * np.log2(1.0 + snr)


def link_capacity(assignment_row, rates) -> float:
    z = np.asarray(assignment_row)
    r = np.asarray(rates, dtype=float)
    if z.shape != r.shape:
        raise ValueError(f"assignment length {z.shape} does not match rates {r.shape}")
    return float(np.dot(z, r))


def draw_rates(scenario) -> dict:
    """Per-channel rates for the current slot of ``scenario``."""
    return link_rates(scenario.config, scenario.positions, scenario.alignment, scenario.fading_rng)


def link_rates(cfg, positions, alignment, rng) -> dict:
    """Per-channel rates for vehicles at ``positions``.

    Returns arrays keyed by pool: ``v2i_up``/``v2i_down`` with shape (K, N) and
    ``v2v_up``/``v2v_down`` with shape (K, K, N) indexed [sender, peer, n].
    Fading is drawn for every pair each slot regardless of neighbor status.
    """
    ch = cfg.channel
    pos = np.asarray(positions, dtype=float)
    K = len(pos)
    dmin = ch["min_distance"]
    intercept, slope = ch["path_loss_intercept"], ch["path_loss_slope"]
    fading = ch["fading"]
    out = {}
    d_rsu = np.maximum(np.hypot(pos - cfg.rsu_coverage / 2.0, ch["rsu_offset"]), dmin)
    d_v2v = np.maximum(np.abs(pos[:, None] - pos[None, :]), dmin)
    # large-scale gains are shared by all pools; fading is drawn per pool
    base = {"v2i": channel_gain(d_rsu, None, False, intercept, slope),
            "v2v": channel_gain(d_v2v, None, False, intercept, slope)}
    idx = np.arange(K)
    for pool in ("v2i_up", "v2i_down", "v2v_up", "v2v_down"):
        n = cfg.pool_size(pool)
        w = cfg.bandwidth(pool) / n
        sigma2 = noise_power(w, ch["noise_density_dbm_hz"])
        g = base[pool[:3]][..., None] * np.ones(n)
        if fading:
            g = g * rng.exponential(1.0, size=g.shape)
        if pool.startswith("v2i"):
            link = LinkSpec(LinkKind(pool), w, cfg.tx_power_v2i, sigma2, ch["interference"])
            out[pool] = per_channel_rate(link, g)
        else:
            snr = cfg.tx_power_v2v * g / (sigma2 + ch["interference"])
            rate = (1.0 - alignment)[:, :, None] * w * np.log2(1.0 + snr)
            rate[idx, idx, :] = 0.0
            out[pool] = rate
    return out
