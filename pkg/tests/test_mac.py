import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbiotsim import clock
from nbiotsim.config import CssOffset, NpdcchCssConfig
from nbiotsim.fapi import HarqIndication, RachIndication
from nbiotsim.mac import (Backpressure, MacScheduler, Timeline, css_start_subframes, next_css_start,
                          ra_rnti_for)
from nbiotsim.radio import LCID_CCCH, MacPdu
from nbiotsim.trace import Tag, Tracer


def brute_css(r_max, g, frac, start, stop):
    period = int(r_max * g)
    offset = math.floor(period * frac)
    return [n for n in range(start, stop) if n % period == offset]


def test_listing_css_starts(enb_cfg):
    assert css_start_subframes(enb_cfg.css, 0, 30) == [2, 10, 18, 26]


def test_zero_offset_css_starts():
    css = NpdcchCssConfig(4, Fraction(2), CssOffset.ZERO)
    assert css_start_subframes(css, 0, 20) == [0, 8, 16]


def test_fractional_g_css_starts():
    css = NpdcchCssConfig(4, Fraction(3, 2), CssOffset.ONE_FOURTH)
    assert css_start_subframes(css, 0, 20) == [1, 7, 13, 19]


rmax = st.sampled_from([1, 2, 4, 8, 16, 32])
gs = st.sampled_from([Fraction(3, 2), Fraction(2), Fraction(4), Fraction(8), Fraction(16)])
offsets = st.sampled_from(list(CssOffset))


@given(rmax, gs, offsets, st.integers(0, 5000), st.integers(0, 400))
def test_css_matches_brute_force(r, g, off, start, span):
    css = NpdcchCssConfig(r, g, off)
    if (r * g).denominator != 1:
        return
    assert css_start_subframes(css, start, start + span) == brute_css(r, g, off.fraction, start,
                                                                       start + span)


@given(rmax, gs, offsets, st.integers(0, 5000))
def test_next_css_start_is_first_candidate(r, g, off, n):
    css = NpdcchCssConfig(r, g, off)
    if (r * g).denominator != 1:
        return
    first = next_css_start(css, n)
    assert first >= n and first - n < css.period
    assert first == brute_css(r, g, off.fraction, n, n + css.period)[0]


def test_ra_rnti():
    assert ra_rnti_for(8) == 1 and ra_rnti_for(48) == 2
    assert ra_rnti_for(40 * 1023 + 8) == 1


# -- timeline -----------------------------------------------------------------


def test_timeline_rejects_overlap():
    t = Timeline()
    t.reserve(5, 3, "a")
    with pytest.raises(RuntimeError):
        t.reserve(7, 2, "b")
    t.reserve(8, 2, "b")
    assert t.first_free(5, 2, 100) == 10


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(1, 6)), max_size=10), st.integers(0, 60),
       st.integers(1, 6))
def test_first_free_matches_scan(reservations, start, length):
    t = Timeline()
    for s, n in reservations:
        if t.is_free(s, n):
            t.reserve(s, n, None)
    want = next((n for n in range(start, 200) if all(m not in t.busy for m in range(n, n + length))), None)
    assert t.first_free(start, length, 200) == want


# -- random access -------------------------------------------------------------


class Upper:
    def __init__(self):
        self.connected = []
        self.released = []

    def on_ccch(self, rnti, sdu, now):
        return b"\x11"

    def on_dcch(self, rnti, sdu, now):
        pass

    def on_connected(self, rnti, now):
        self.connected.append((rnti, now))

    def on_released(self, rnti, now):
        self.released.append((rnti, now))


def _mac(enb_cfg, upper=None):
    tracer = Tracer()
    return MacScheduler(enb_cfg, tracer, upper=upper), tracer


def _ind(occasion=0, sc=0, ce=0):
    sfn, sf = clock.sfn_sf(occasion)
    return RachIndication(sfn, sf, sc, ce)


def _rar_starts(tracer):
    return [int(e.fields()["dci_start"]) for e in tracer.events if e.verb == "rar_scheduled"]


def test_rar_on_first_candidate_after_preamble(enb_cfg):
    mac, tracer = _mac(enb_cfg)
    assert mac.on_rach_indication(_ind(), 5) is not None
    assert _rar_starts(tracer) == [10]
    dci = mac._dl_cfg[10][0][0][0]
    assert dci.rnti == ra_rnti_for(0)


@given(st.integers(0, 2000))
def test_rar_start_is_earliest_candidate_oracle(end):
    from nbiotsim.config import load_enb_config
    from conftest import DATA
    cfg = load_enb_config(DATA / "band28_listing.conf")
    mac, tracer = _mac(cfg)
    mac.on_rach_indication(_ind(), end)
    assert _rar_starts(tracer) == [next(n for n in range(end, end + 100) if n % 8 == 2)]


def test_two_rars_in_one_occasion_are_serialized(enb_cfg):
    mac, tracer = _mac(enb_cfg)
    mac.on_rach_indication(_ind(sc=0), 5)
    mac.on_rach_indication(_ind(sc=1), 5)
    assert _rar_starts(tracer) == [10, 18]
    tc = [int(e.fields()["tc_rnti"]) for e in tracer.events if e.verb == "rar_scheduled"]
    assert tc == [0x0101, 0x0102]


def test_full_window_drops_rar(enb_cfg):
    mac, tracer = _mac(enb_cfg)
    window_end = 5 + 8 * 8
    mac.dl_timeline.reserve(5, window_end + 80, "blocked")
    assert mac.on_rach_indication(_ind(), 5) is None
    assert mac.counters["rar_dropped"] == 1
    assert [e.verb for e in tracer.events] == ["rar_dropped"]


def test_rar_within_window_whenever_sent(enb_cfg):
    mac, tracer = _mac(enb_cfg)
    for i in range(30):
        mac.on_rach_indication(_ind(sc=i % 12), 5)
    for e in tracer.events:
        if e.verb == "rar_scheduled":
            f = e.fields()
            assert int(f["dci_start"]) <= int(f["preamble_end"]) + 64
    assert mac.counters["rar_sent"] + mac.counters["rar_dropped"] == 30


def test_msg3_grant_honours_range_start(enb_cfg):
    mac, _ = _mac(enb_cfg)
    rar = mac.on_rach_indication(_ind(), 5)
    assert rar.msg3_subcarrier >= 0 and rar.msg3_delay >= mac.params.msg3_delay


def _msg3():
    return MacPdu(LCID_CCCH, b"\x10" + b"\x01\x02\x03\x04\x05" + b"\x01\x0d\x00").encode()


def _connect_until(mac, rnti, start, stop, ack_at=None):
    for now in range(start, stop):
        if ack_at is not None and now == ack_at:
            mac.on_harq(HarqIndication(rnti, True), now)
        mac.tick(now, [])


def test_msg4_ack_promotes_and_cancels_timer(enb_cfg):
    upper = Upper()
    mac, tracer = _mac(enb_cfg, upper)
    rar = mac.on_rach_indication(_ind(), 5)
    rnti = rar.temp_crnti
    assert mac.on_msg3(rnti, _msg3(), 20)
    assert mac.ues[rnti].contention_deadline == 20 + 32 * 8
    _connect_until(mac, rnti, 20, 41, ack_at=40)
    assert mac.ues[rnti].state == "connected"
    assert mac.ues[rnti].contention_deadline is None
    assert upper.connected == [(rnti, 40)]
    _connect_until(mac, rnti, 41, 400)
    assert rnti in mac.ues


def test_msg4_never_acked_releases_at_timer_expiry(enb_cfg):
    upper = Upper()
    mac, tracer = _mac(enb_cfg, upper)
    rnti = mac.on_rach_indication(_ind(), 5).temp_crnti
    mac.on_msg3(rnti, _msg3(), 20)
    _connect_until(mac, rnti, 20, 400)
    assert upper.released == [(rnti, 20 + 256)]
    rel = [e for e in tracer.events if e.verb == "rnti_released"]
    assert len(rel) == 1 and rel[0].fields()["reason"] == "contention_timer"


def test_duplicate_msg3_ignored(enb_cfg):
    mac, _ = _mac(enb_cfg, Upper())
    rnti = mac.on_rach_indication(_ind(), 5).temp_crnti
    assert mac.on_msg3(rnti, _msg3(), 20)
    assert not mac.on_msg3(rnti, _msg3(), 21)
    assert len(mac.ues[rnti].dl_queue) == 1


def test_msg3_for_unknown_rnti_ignored(enb_cfg):
    mac, tracer = _mac(enb_cfg)
    assert not mac.on_msg3(0x999, _msg3(), 20)


# -- downlink allocation ----------------------------------------------------------


def test_first_fit_on_empty_timeline(enb_cfg):
    mac, _ = _mac(enb_cfg)
    tb = mac.schedule_dl(0x200, b"x" * 10, 0, 3)
    assert tb.start == 10 + 4
    assert mac.dl_timeline.busy[10] == ("dci", 0x200)


def test_ce2_allocation_four_times_longer(enb_cfg):
    mac, _ = _mac(enb_cfg)
    a = mac.schedule_dl(1, b"x" * 40, 0, 0)
    b = mac.schedule_dl(2, b"x" * 40, 2, 0)
    len_a = sum(1 for v in mac.dl_timeline.busy.values() if v == ("pdsch", 1))
    len_b = sum(1 for v in mac.dl_timeline.busy.values() if v == ("pdsch", 2))
    assert (len_a, len_b) == (2, 8)
    assert a.repetitions * 4 == b.repetitions


def test_same_tick_payloads_do_not_overlap(enb_cfg):
    mac, _ = _mac(enb_cfg)
    a = mac.schedule_dl(1, b"x" * 64, 0, 0)
    b = mac.schedule_dl(2, b"x" * 64, 0, 0)
    assert b.start >= a.start + 2


def test_backpressure_when_horizon_full(enb_cfg):
    mac, _ = _mac(enb_cfg)
    mac.dl_timeline.reserve(0, mac.params.horizon + 200, "full")
    with pytest.raises(Backpressure):
        mac.schedule_dl(1, b"x", 0, 0)


def brute_place(busy, css, now, length, dci_len, gap, max_delay, horizon):
    for c in range(now, now + horizon + 1):
        if c % css.period != css.offset or any(m in busy for m in range(c, c + dci_len)):
            continue
        for d in range(c + max(gap, dci_len), c + max_delay + 1):
            if all(m not in busy for m in range(d, d + length)) and d + length <= now + horizon:
                return c, d
    return None


@settings(max_examples=150)
@given(st.lists(st.tuples(st.integers(0, 120), st.integers(1, 12)), max_size=12), st.integers(0, 60),
       st.integers(1, 100), st.integers(0, 2))
def test_schedule_dl_matches_first_fit_oracle(reservations, now, nbytes, ce):
    from nbiotsim.config import load_enb_config
    from conftest import DATA
    cfg = load_enb_config(DATA / "band28_listing.conf")
    mac, _ = _mac(cfg)
    for s, n in reservations:
        if mac.dl_timeline.is_free(s, n):
            mac.dl_timeline.reserve(s, n, "x")
    busy = dict(mac.dl_timeline.busy)
    p = mac.params
    length = p.dl_reps[ce] * max(1, -(-nbytes // p.dl_bytes_per_sf))
    want = brute_place(busy, cfg.css, now, length, cfg.css.r_max, p.dci_data_gap, p.max_data_delay, p.horizon)
    try:
        tb = mac.schedule_dl(7, b"y" * nbytes, ce, now)
    except Backpressure:
        assert want is None
        return
    c = next(n for n, v in mac.dl_timeline.busy.items() if v == ("dci", 7))
    assert (c, tb.start) == want
