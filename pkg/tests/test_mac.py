"""Link adaptation and round-robin scheduler against brute-force dealing."""

import pytest

from aerotwin.mac import (
    DEFAULT_MCS_TABLE,
    QAM16,
    QAM64,
    CellConfig,
    EmptyTable,
    Mcs,
    SchedulerState,
    bits_per_rb,
    per_user_throughput,
    schedule_subframe,
    select_mcs,
)

CELL = CellConfig()


def deal_rbs_oracle(n_rb, k, cursor):
    """Deal n_rb RBs one at a time, cyclically, starting at cursor."""
    counts = [0] * k
    for rb in range(n_rb):
        counts[(cursor + rb) % k] += 1
    return counts, (cursor + n_rb) % k


def test_bits_per_rb_qam64():
    assert bits_per_rb(QAM64, CELL) == 504


def test_bits_per_rb_qam16():
    assert bits_per_rb(QAM16, CELL) == 336


def test_bits_per_rb_degenerate_cell():
    assert bits_per_rb(QAM64, CellConfig(symbols_per_rb=0)) == 0


def test_select_best_channel():
    assert select_mcs(200.0) is QAM64


def test_select_inclusive_threshold():
    assert select_mcs(QAM64.min_snr_dB) is QAM64
    assert select_mcs(QAM64.min_snr_dB - 1e-9) is QAM16


def test_select_disconnected():
    assert select_mcs(-0.001) is None
    assert select_mcs(-40.0) is None


def test_select_gap_falls_back_to_lowest():
    # connected but below every table threshold: lowest-order MCS keeps the link up
    assert select_mcs(4.0) is QAM16


def test_select_empty_table():
    with pytest.raises(EmptyTable):
        select_mcs(20.0, table=())


def test_select_requires_decreasing_thresholds():
    bad = (Mcs("QAM16", 4, 8.0), Mcs("QAM64", 6, 18.0))
    with pytest.raises(ValueError):
        select_mcs(20.0, table=bad)


def test_select_offset_invariance():
    # shifting thresholds and SNR by the same offset leaves the choice unchanged
    for offset in (-7.0, 0.0, 12.5):
        table = tuple(Mcs(m.name, m.bits_per_symbol, m.min_snr_dB + offset)
                      for m in DEFAULT_MCS_TABLE)
        for snr in (-3.0, 5.0, 8.0, 13.0, 18.0, 25.0):
            base = select_mcs(snr, DEFAULT_MCS_TABLE, 0.0)
            shifted = select_mcs(snr + offset, table, 0.0 + offset)
            assert (base is None) == (shifted is None)
            if base is not None:
                assert base.name == shifted.name


def test_two_users_split_evenly_every_subframe():
    state = SchedulerState()
    active = [("a", QAM64), ("b", QAM64)]
    for _ in range(50):
        alloc, state = schedule_subframe(state, active, CELL)
        assert alloc.users["a"].rb_count == 50
        assert alloc.users["b"].rb_count == 50
        assert alloc.users["a"].bits_delivered == 50 * 504


def test_single_user_gets_everything():
    alloc, _ = schedule_subframe(SchedulerState(), [("solo", QAM64)], CELL)
    assert alloc.users["solo"].rb_count == 100
    assert alloc.users["solo"].bits_delivered == 50_400


def test_three_users_rotating_extra_rb():
    state = SchedulerState()
    active = [("a", QAM64), ("b", QAM64), ("c", QAM64)]
    seen = []
    cursor = 0
    for _ in range(9):
        alloc, state = schedule_subframe(state, active, CELL)
        counts = [alloc.users[u].rb_count for u in ("a", "b", "c")]
        assert sorted(counts) == [33, 33, 34]
        expected, cursor = deal_rbs_oracle(100, 3, cursor)
        assert counts == expected
        seen.append(counts.index(34))
    # the extra RB must visit every user
    assert set(seen) == {0, 1, 2}


def test_disconnected_user_gets_nothing():
    alloc, _ = schedule_subframe(SchedulerState(), [("a", QAM64), ("b", None)], CELL)
    assert alloc.users["a"].rb_count == 100
    assert alloc.users["b"].rb_count == 0
    assert alloc.users["b"].bits_delivered == 0


def test_all_disconnected_is_all_zero_and_cursor_unchanged():
    state = SchedulerState(rr_cursor=1, connected_ids=("a", "b"))
    alloc, new_state = schedule_subframe(state, [("a", None), ("b", None)], CELL)
    assert alloc.total_rbs() == 0
    assert new_state.rr_cursor == 1


def test_empty_active_list_rejected():
    with pytest.raises(ValueError):
        schedule_subframe(SchedulerState(), [], CELL)


def test_conservation():
    state = SchedulerState()
    active = [("a", QAM64), ("b", QAM16), ("c", QAM64), ("d", None)]
    for _ in range(137):
        alloc, state = schedule_subframe(state, active, CELL)
        assert alloc.total_rbs() == CELL.n_rb


@pytest.mark.parametrize("k", [1, 2, 3, 5, 7])
def test_fairness_against_oracle(k):
    users = [(f"u{i}", QAM64) for i in range(k)]
    state = SchedulerState()
    cursor = 0
    cumulative = [0] * k
    for _ in range(500):
        alloc, state = schedule_subframe(state, users, CELL)
        counts = [alloc.users[f"u{i}"].rb_count for i in range(k)]
        expected, cursor = deal_rbs_oracle(100, k, cursor)
        assert counts == expected
        assert max(counts) - min(counts) <= 1
        cumulative = [c + n for c, n in zip(cumulative, counts)]
        assert max(cumulative) - min(cumulative) <= 1


def test_cursor_resets_when_set_changes():
    state = SchedulerState()
    full = [("a", QAM64), ("b", QAM64), ("c", QAM64)]
    _, state = schedule_subframe(state, full, CELL)
    assert state.rr_cursor == 1
    # "b" drops out: new connected set, cursor restarts from the front
    alloc, state = schedule_subframe(state, [("a", QAM64), ("b", None), ("c", QAM64)], CELL)
    assert alloc.users["a"].rb_count == 50
    assert alloc.users["c"].rb_count == 50


def _steady_state_allocs(mcs_by_user, subframes):
    state = SchedulerState()
    active = list(mcs_by_user.items())
    out = []
    for _ in range(subframes):
        alloc, state = schedule_subframe(state, active, CELL)
        out.append(alloc)
    return out


def test_throughput_two_users_qam64():
    allocs = _steady_state_allocs({"a": QAM64, "b": QAM64}, 1000)
    rates = per_user_throughput(allocs, 1.0)
    assert rates["a"] == 25.2
    assert rates["b"] == 25.2


def test_throughput_two_users_qam16():
    allocs = _steady_state_allocs({"a": QAM16, "b": QAM16}, 1000)
    rates = per_user_throughput(allocs, 1.0)
    assert rates["a"] == 16.8
    assert rates["b"] == 16.8


def test_throughput_mixed_mcs_against_subframe_sum():
    allocs = _steady_state_allocs({"fast": QAM64, "slow": QAM16}, 1000)
    rates = per_user_throughput(allocs, 1.0)
    # oracle: subframe-by-subframe accumulation
    fast_bits = sum(a.users["fast"].bits_delivered for a in allocs)
    slow_bits = sum(a.users["slow"].bits_delivered for a in allocs)
    assert rates["fast"] == fast_bits / 1e6
    assert rates["slow"] == slow_bits / 1e6
    assert rates["fast"] == 25.2
    assert rates["slow"] == 16.8


def test_throughput_single_user_capacity():
    allocs = _steady_state_allocs({"solo": QAM64}, 2000)
    rates = per_user_throughput(allocs, 2.0)
    assert rates["solo"] == 50.4


def test_monotone_adaptation_with_distance():
    """As SNR decays with distance the MCS order never climbs back up."""
    import math

    from aerotwin.channel import PathLossModel, RadioConfig, link_snr, path_loss

    model = PathLossModel()
    radio = RadioConfig()
    order = {None: 0, "QAM16": 1, "QAM64": 2}
    last = 2
    for d in [10.0 * 1.2 ** i for i in range(40)]:
        snr = link_snr(radio, path_loss(model, d, radio.carrier_freq_MHz))
        mcs = select_mcs(snr)
        rank = order[mcs.name if mcs else None]
        assert rank <= last
        last = rank
