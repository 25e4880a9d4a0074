"""Packet-layer channel emulation: path loss, link budget, channel matrix.

Two propagation models are supported. Free-space loss uses the
standard km/MHz form ``20*log10(d_km) + 20*log10(f_MHz) + 32.44``;
log-distance uses ``PL0 + 10*n*log10(d/d0)``. Optional log-normal
shadowing is drawn from a seeded generator keyed on (seed, step,
pair), so a matrix entry depends only on the configuration and never
on evaluation order. Antennas are isotropic with 0 dBi gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geodesy import GeoPosition, slant_distance

FREE_SPACE = "free_space"
LOG_DISTANCE = "log_distance"

# fixed stream tags so shadowing and other consumers never collide
_SHADOW_STREAM = 1


class NonPositiveDistance(ValueError):
    """Path loss is undefined at zero or negative distance."""


class CoincidentNodes(ValueError):
    """Two distinct nodes may not occupy the same position."""


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dBm: float = 11.5
    carrier_freq_MHz: float = 3500.0
    bandwidth_MHz: float = 20.0
    noise_figure_dB: float = 7.0

    def __post_init__(self) -> None:
        if self.carrier_freq_MHz <= 0 or self.bandwidth_MHz <= 0:
            raise ValueError("carrier frequency and bandwidth must be positive")
        if self.noise_figure_dB < 0:
            raise ValueError("noise figure must be >= 0 dB")


@dataclass(frozen=True)
class PathLossModel:
    variant: str = FREE_SPACE
    exponent: float = 2.0  # log-distance only
    reference_distance_m: float = 1.0
    reference_loss_dB: float = 0.0
    shadowing_sigma_dB: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in (FREE_SPACE, LOG_DISTANCE):
            raise ValueError(f"unknown path-loss variant {self.variant!r}")
        if self.variant == LOG_DISTANCE and self.exponent < 2.0:
            raise ValueError("log-distance exponent must be >= 2")
        if self.reference_distance_m <= 0:
            raise ValueError("reference distance must be positive")
        if self.shadowing_sigma_dB < 0:
            raise ValueError("shadowing sigma must be >= 0 dB")


@dataclass(frozen=True)
class LinkState:
    distance_m: float
    path_loss_dB: float
    snr_dB: float
    connected: bool


#: diagonal marker for the channel matrix; never a real link
SELF_LINK = LinkState(0.0, math.nan, math.nan, False)


def _shadowing_dB(model: PathLossModel, step: int, i: int, j: int) -> float:
    if model.shadowing_sigma_dB == 0.0:
        return 0.0
    a, b = (i, j) if i <= j else (j, i)  # one draw per unordered pair
    rng = np.random.default_rng([model.rng_seed, _SHADOW_STREAM, step, a, b])
    return float(rng.normal(0.0, model.shadowing_sigma_dB))


def path_loss(
    model: PathLossModel,
    distance_m: float,
    freq_MHz: float,
    *,
    step: int = 0,
    pair: tuple[int, int] = (0, 1),
) -> float:
    """Path loss in dB at the given distance, shadowing included.

    Raises NonPositiveDistance for d <= 0. With shadowing_sigma_dB of
    zero the result is the deterministic model value.
    """
    if distance_m <= 0:
        raise NonPositiveDistance(f"distance must be positive, got {distance_m}")
    if model.variant == FREE_SPACE:
        pl = 20.0 * math.log10(distance_m / 1000.0) + 20.0 * math.log10(freq_MHz) + 32.44
    else:
        pl = model.reference_loss_dB + 10.0 * model.exponent * math.log10(
            distance_m / model.reference_distance_m
        )
    return pl + _shadowing_dB(model, step, *pair)


def noise_floor_dBm(radio: RadioConfig) -> float:
    """Thermal noise floor: -174 dBm/Hz over the channel bandwidth plus noise figure."""
    return -174.0 + 10.0 * math.log10(radio.bandwidth_MHz * 1e6) + radio.noise_figure_dB


def link_snr(radio: RadioConfig, path_loss_dB: float) -> float:
    """Downlink SNR in dB for the given path loss."""
    return radio.tx_power_dBm - path_loss_dB - noise_floor_dBm(radio)


class ChannelMatrix:
    """Pairwise link states for one snapshot of node positions."""

    def __init__(self, entries: dict[tuple[str, str], LinkState]):
        self._entries = entries

    def link(self, a: str, b: str) -> LinkState:
        return self._entries[(a, b)]

    def items(self):
        return self._entries.items()

    def __eq__(self, other) -> bool:
        return isinstance(other, ChannelMatrix) and self._entries == other._entries


def channel_matrix(
    nodes: Iterable[tuple[str, GeoPosition]],
    model: PathLossModel,
    radio: RadioConfig,
    *,
    step: int = 0,
    disconnect_snr_dB: float = -math.inf,
) -> ChannelMatrix:
    """Compute the full pairwise link-state matrix for one time step.

    Every ordered pair of distinct nodes gets a LinkState computed
    from the slant distance; diagonal entries are the SELF_LINK
    marker. A link counts as connected while its SNR is at or above
    ``disconnect_snr_dB``. Raises CoincidentNodes if two nodes share
    an identical position.
    """
    node_list = list(nodes)
    if len(node_list) < 2:
        raise ValueError("need at least two nodes")
    entries: dict[tuple[str, str], LinkState] = {}
    for i, (id_i, pos_i) in enumerate(node_list):
        entries[(id_i, id_i)] = SELF_LINK
        for j, (id_j, pos_j) in enumerate(node_list):
            if j <= i:
                continue
            d = slant_distance(pos_i, pos_j)
            if d == 0.0:
                raise CoincidentNodes(f"nodes {id_i!r} and {id_j!r} coincide")
            pl = path_loss(model, d, radio.carrier_freq_MHz, step=step, pair=(i, j))
            snr = link_snr(radio, pl)
            state = LinkState(d, pl, snr, snr >= disconnect_snr_dB)
            entries[(id_i, id_j)] = state
            entries[(id_j, id_i)] = state
    return ChannelMatrix(entries)
