"""Full-buffer traffic accounting and ping round-trip-time measurement.

Throughput reports simply total the scheduler's delivered bits over a
report interval (iperf against a saturated downlink). The RTT model
is affine in link distance with a fixed penalty once the SNR margin
over the disconnect threshold drops below a configured band, plus
seeded Gaussian jitter; a disconnected link or an RTT at/over the
timeout yields a timeout sample. RTT magnitudes are emulator
calibration, not measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .channel import LinkState
from .mac import SubframeAllocation

_PING_STREAM = 2


@dataclass(frozen=True)
class PingConfig:
    interval_s: float = 1.0
    timeout_s: float = 1.0
    base_rtt_ms: float = 30.0
    distance_coeff_ms_per_m: float = 0.2
    marginal_snr_penalty_ms: float = 40.0
    marginal_margin_dB: float = 18.0
    jitter_sigma_ms: float = 2.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.interval_s <= 0 or self.timeout_s <= 0:
            raise ValueError("ping interval and timeout must be positive")
        if self.timeout_s * 1000.0 <= self.base_rtt_ms:
            raise ValueError("timeout must exceed the base RTT")
        if min(self.base_rtt_ms, self.distance_coeff_ms_per_m,
               self.marginal_snr_penalty_ms, self.marginal_margin_dB,
               self.jitter_sigma_ms) < 0:
            raise ValueError("RTT model parameters must be >= 0")


@dataclass(frozen=True)
class PingSample:
    t: float
    rtt_ms: float | None  # None marks a timeout
    distance_m: float

    @property
    def timed_out(self) -> bool:
        return self.rtt_ms is None


@dataclass(frozen=True)
class ThroughputSample:
    t: float
    ue_id: str
    mbps: float
    distance_m: float


def ping_rtt(
    link: LinkState,
    mcs_margin_dB: float,
    cfg: PingConfig,
    step: int,
    *,
    stream: int = 0,
    t: float = 0.0,
) -> PingSample:
    """One ping over the given link state.

    ``mcs_margin_dB`` is how far the SNR sits above the disconnect
    threshold; below ``marginal_margin_dB`` the edge-of-cell penalty
    applies. ``stream`` separates jitter draws of concurrent ping
    processes sharing one seed.
    """
    if not link.connected:
        return PingSample(t, None, link.distance_m)
    rtt = cfg.base_rtt_ms + cfg.distance_coeff_ms_per_m * link.distance_m
    if mcs_margin_dB < cfg.marginal_margin_dB:
        rtt += cfg.marginal_snr_penalty_ms
    if cfg.jitter_sigma_ms > 0.0:
        rng = np.random.default_rng([cfg.rng_seed, _PING_STREAM, stream, step])
        rtt += float(rng.normal(0.0, cfg.jitter_sigma_ms))
    rtt = max(0.0, rtt)
    if rtt >= cfg.timeout_s * 1000.0:
        return PingSample(t, None, link.distance_m)
    return PingSample(t, rtt, link.distance_m)


def iperf_report(
    allocations: Iterable[SubframeAllocation],
    ue_id: str,
    interval_s: float,
    *,
    t: float = 0.0,
    distance_m: float = 0.0,
) -> ThroughputSample:
    """Throughput sample for one user over a report interval of subframes."""
    if interval_s <= 0:
        raise ValueError("report interval must be positive")
    bits = sum(a.users[ue_id].bits_delivered for a in allocations if ue_id in a.users)
    return ThroughputSample(t, ue_id, bits / interval_s / 1e6, distance_m)
