"""Link adaptation and round-robin downlink scheduling.

Each 1 ms subframe carries ``n_rb`` resource blocks; an RB delivers
``symbols_per_rb * bits_per_symbol`` bits at the selected modulation
(504 bits at 64-QAM, 336 at 16-QAM with the defaults). RBs are dealt
one at a time in cyclic order over the connected users, and the deal
cursor keeps rotating across subframes so any remainder RBs even out.
A disconnected user receives nothing; ``None`` stands for the
disconnected state wherever an MCS is expected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence


class EmptyTable(ValueError):
    """MCS selection needs at least one table entry."""


@dataclass(frozen=True)
class Mcs:
    name: str
    bits_per_symbol: int
    min_snr_dB: float


QAM64 = Mcs("QAM64", 6, 18.0)
QAM16 = Mcs("QAM16", 4, 8.0)

#: default adaptation table, highest order first; thresholds are
#: emulator calibration knobs, not standardized values
DEFAULT_MCS_TABLE: tuple[Mcs, ...] = (QAM64, QAM16)
DEFAULT_DISCONNECT_SNR_DB = 0.0


@dataclass(frozen=True)
class CellConfig:
    n_rb: int = 100
    symbols_per_rb: int = 84
    subframe_ms: int = 1
    disconnect_snr_dB: float = DEFAULT_DISCONNECT_SNR_DB

    def __post_init__(self) -> None:
        if self.n_rb <= 0:
            raise ValueError("n_rb must be positive")
        if self.symbols_per_rb < 0:
            raise ValueError("symbols_per_rb must be >= 0")
        if self.subframe_ms != 1:
            raise ValueError("subframe duration is fixed at 1 ms")


def bits_per_rb(mcs: Mcs, cell: CellConfig) -> int:
    return cell.symbols_per_rb * mcs.bits_per_symbol


def select_mcs(
    snr_dB: float,
    table: Sequence[Mcs] = DEFAULT_MCS_TABLE,
    disconnect_snr_dB: float = DEFAULT_DISCONNECT_SNR_DB,
) -> Mcs | None:
    """Pick the highest-order MCS the SNR supports, or None when disconnected.

    Thresholds are inclusive: an SNR exactly at a threshold selects
    that MCS. Below the disconnect threshold the link is down. An SNR
    between the disconnect threshold and the lowest table entry keeps
    the link alive at the lowest-order MCS.
    """
    entries = list(table)
    if not entries:
        raise EmptyTable("MCS table is empty")
    thresholds = [m.min_snr_dB for m in entries]
    if thresholds != sorted(thresholds, reverse=True) or len(set(thresholds)) != len(thresholds):
        raise ValueError("MCS table thresholds must be strictly decreasing")
    if snr_dB < disconnect_snr_dB:
        return None
    for mcs in entries:
        if snr_dB >= mcs.min_snr_dB:
            return mcs
    return entries[-1]


@dataclass(frozen=True)
class UserAllocation:
    rb_count: int
    mcs: Mcs | None
    bits_delivered: int


@dataclass(frozen=True)
class SubframeAllocation:
    users: dict[str, UserAllocation]

    def total_rbs(self) -> int:
        return sum(u.rb_count for u in self.users.values())


@dataclass(frozen=True)
class SchedulerState:
    rr_cursor: int = 0
    round_counter: int = 0
    connected_ids: tuple[str, ...] = field(default_factory=tuple)


def schedule_subframe(
    state: SchedulerState,
    active: Sequence[tuple[str, Mcs | None]],
    cell: CellConfig,
) -> tuple[SubframeAllocation, SchedulerState]:
    """Deal one subframe's RBs round-robin over the connected users.

    RB k goes to connected user (cursor + k) mod K, so per-subframe
    counts differ by at most one and the cursor advance of
    ``n_rb mod K`` rotates any remainder across subframes. The cursor
    resets when the connected set changes. With every user
    disconnected the allocation is all-zero and the cursor unchanged.
    """
    if not active:
        raise ValueError("active list must be non-empty")
    connected = [(uid, m) for uid, m in active if m is not None]
    users: dict[str, UserAllocation] = {
        uid: UserAllocation(0, m, 0) for uid, m in active
    }
    if not connected:
        return SubframeAllocation(users), state

    ids = tuple(uid for uid, _ in connected)
    cursor = state.rr_cursor if ids == state.connected_ids else 0
    k = len(connected)
    base, extra = divmod(cell.n_rb, k)
    for offset, (uid, mcs) in enumerate(connected):
        rbs = base + (1 if (offset - cursor) % k < extra else 0)
        users[uid] = UserAllocation(rbs, mcs, rbs * bits_per_rb(mcs, cell))
    new_state = SchedulerState(
        rr_cursor=(cursor + cell.n_rb) % k,
        round_counter=state.round_counter + 1,
        connected_ids=ids,
    )
    return SubframeAllocation(users), new_state


def per_user_throughput(
    allocations: Iterable[SubframeAllocation],
    window_s: float,
) -> dict[str, float]:
    """Average throughput in Mbps per user over a window of subframes."""
    if window_s <= 0:
        raise ValueError("window must be positive")
    totals: dict[str, int] = {}
    for alloc in allocations:
        for uid, ua in alloc.users.items():
            totals[uid] = totals.get(uid, 0) + ua.bits_delivered
    return {uid: bits / window_s / 1e6 for uid, bits in totals.items()}
