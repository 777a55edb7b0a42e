"""eNB MAC: NPDCCH common search space timing, RAR/Msg3/Msg4, repetition-aware scheduling.

Timing conventions (all in subframes):

* NPDCCH candidates sit at ``n mod T == floor(T * offset_fraction)`` with
  ``T = R_max * G``.  Every DCI, RAR or not, is placed on a candidate and
  occupies ``R_max`` downlink subframes.
* The RA response window and the contention resolution timer are counted in
  NPDCCH periods, so ``window * T`` and ``timer * T`` subframes.
* Scheduled data starts at least ``dci_data_gap`` subframes after its DCI
  start and never overlaps the DCI itself.
* One HARQ process per direction per UE, at most ``harq_max_retx``
  retransmissions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from . import clock
from .config import EnbConfig, NpdcchCssConfig, RachCeConfig, SubcarrierSpacing
from .fapi import (CrcIndication, Dci, DciFormat, DlConfigRequest, DlPdu, HarqIndication, RachIndication,
                   RntiType, RxIndication, UlConfigRequest, UlGrant)
from .phy import NprachConfig, TransportBlock
from .radio import LCID_CCCH, LCID_DCCH, CR_ID_LEN, MacPdu, RadioDecodeError, RarPdu
from .trace import Tag, Tracer

FIRST_TEMP_CRNTI = 0x0101
RA_RNTI_PERIOD = 40


class Backpressure(Exception):
    """No room on the downlink timeline within the scheduling horizon."""


@dataclass(frozen=True)
class MacParams:
    dci_data_gap: int = 4
    harq_max_retx: int = 3
    harq_ack_delay: int = 12  # DL data end -> HARQ feedback
    msg3_delay: int = 12  # RAR data end -> earliest Msg3 start
    ul_grant_delay: int = 8  # N0 DCI end -> earliest NPUSCH start
    horizon: int = 1024
    max_data_delay: int = 64
    dl_bytes_per_sf: int = 32
    ul_bytes_per_ru: int = 16
    ul_poll_interval: int = 1024
    ul_poll_bytes: int = 32
    dl_reps: tuple = (1, 2, 4)
    ul_reps: tuple = (1, 2, 4)


def css_period(css: NpdcchCssConfig) -> int:
    return css.period


def css_start_subframes(css: NpdcchCssConfig, start: int, stop: int) -> list[int]:
    """All NPDCCH common-search-space starts ``n`` with ``start <= n < stop``."""
    if start > stop:
        raise ValueError("start must not exceed stop")
    period, offset = css.period, css.offset
    first = start + (offset - start) % period
    return list(range(first, stop, period))


def next_css_start(css: NpdcchCssConfig, n: int) -> int:
    period = css.period
    return n + (css.offset - n) % period


def ra_rnti_for(occasion_start: int) -> int:
    return 1 + (occasion_start // RA_RNTI_PERIOD) % 1023


class Timeline:
    """Subframe occupancy of one resource (the DL carrier or one UL subcarrier)."""

    def __init__(self):
        self.busy: dict[int, object] = {}
        self.intervals: list[tuple[int, int, object]] = []

    def is_free(self, start: int, length: int) -> bool:
        busy = self.busy
        return all(n not in busy for n in range(start, start + length))

    def first_free(self, start: int, length: int, limit: int) -> int | None:
        n = start
        while n <= limit:
            blocked = next((m for m in range(n, n + length) if m in self.busy), None)
            if blocked is None:
                return n
            n = blocked + 1
        return None

    def reserve(self, start: int, length: int, owner) -> None:
        if not self.is_free(start, length):
            raise RuntimeError(f"overlapping allocation at {start}+{length}")
        for n in range(start, start + length):
            self.busy[n] = owner
        self.intervals.append((start, start + length, owner))

    def prune(self, before: int) -> None:
        for n in [n for n in self.busy if n < before]:
            del self.busy[n]
        self.intervals = [iv for iv in self.intervals if iv[1] > before]


@dataclass
class UeSchedCtx:
    rnti: int
    ce_level: int
    state: str  # msg3_wait | contention | connected
    msg3_deadline: int = 0
    contention_deadline: int | None = None
    cr_id: bytes | None = None
    multitone: bool = False
    dl_queue: deque = field(default_factory=deque)
    dl_harq: dict | None = None
    ul_harq: dict | None = None
    bsr: int = 0
    want_ul: bool = False
    ul_since: int = 0
    last_ul: int = 0

    @property
    def rnti_type(self) -> RntiType:
        return RntiType.C if self.state == "connected" else RntiType.TC


class MacScheduler:
    def __init__(self, cfg: EnbConfig, tracer: Tracer, params: MacParams | None = None,
                 nprach: NprachConfig | None = None, upper=None):
        self.cfg = cfg
        self.css = cfg.css
        self.period = cfg.css.period
        self.rach: tuple[RachCeConfig, ...] = cfg.rach
        self.params = params or MacParams()
        self.nprach = nprach or NprachConfig()
        self.tracer = tracer
        self.upper = upper
        self.ues: dict[int, UeSchedCtx] = {}
        self.released: set[int] = set()
        self.dl_timeline = Timeline()
        spacing = cfg.cell.subcarrier_spacing
        self.n_ul_subcarriers = 48 if spacing == SubcarrierSpacing.KHZ3_75 else 12
        self.ru_sf = 32 if spacing == SubcarrierSpacing.KHZ3_75 else 8
        self.ul_timelines = [Timeline() for _ in range(self.n_ul_subcarriers)]
        self._next_rnti = FIRST_TEMP_CRNTI
        self._dl_cfg: dict[int, tuple[list, list]] = {}
        self._ul_cfg: dict[int, list] = {}
        self.counters = {"rar_sent": 0, "rar_dropped": 0, "released": 0, "connected": 0}
        self.now = 0

    # -- helpers -----------------------------------------------------------

    @property
    def dci_len(self) -> int:
        return self.css.r_max

    def _alloc_rnti(self) -> int:
        while True:
            rnti = self._next_rnti
            self._next_rnti = FIRST_TEMP_CRNTI if self._next_rnti >= 0xFFF0 else self._next_rnti + 1
            if rnti not in self.ues:
                return rnti

    def _dl_duration(self, nbytes: int, reps: int) -> int:
        return reps * max(1, math.ceil(nbytes / self.params.dl_bytes_per_sf))

    def _ul_duration(self, nbytes: int, reps: int, multitone: bool = False) -> tuple[int, int]:
        n_ru = max(1, math.ceil(nbytes / self.params.ul_bytes_per_ru))
        ru_sf = self.ru_sf // 2 if multitone and self.ru_sf == 8 else self.ru_sf
        return reps * n_ru * ru_sf, n_ru * self.params.ul_bytes_per_ru

    def _queue_dci(self, at: int, dci: Dci, note: str = "") -> None:
        self._dl_cfg.setdefault(at, ([], []))[0].append((dci, note))

    def _queue_pdu(self, at: int, pdu: DlPdu) -> None:
        self._dl_cfg.setdefault(at, ([], []))[1].append(pdu)

    def _queue_grant(self, at: int, grant: UlGrant) -> None:
        self._ul_cfg.setdefault(at, []).append(grant)

    def _place_dl(self, start: int, data_len: int, deadline: int | None = None):
        """Find (dci_start, data_start) on the CSS for a DL transmission.

        The DCI goes on the first free candidate at or before ``deadline``.
        """
        p = self.params
        limit = start + p.horizon
        if deadline is not None:
            limit = min(limit, deadline)
        for c in css_start_subframes(self.css, start, limit + 1):
            if not self.dl_timeline.is_free(c, self.dci_len):
                continue
            earliest = c + max(p.dci_data_gap, self.dci_len)
            d = self.dl_timeline.first_free(earliest, data_len, c + p.max_data_delay)
            if d is None or d + data_len > start + p.horizon:
                continue
            return c, d
        return None

    def _place_ul(self, earliest: int, length: int, first_sc: int = 0):
        best = None
        for sc in range(first_sc, self.n_ul_subcarriers):
            n = self.ul_timelines[sc].first_free(earliest, length, earliest + self.params.horizon)
            if n is not None and (best is None or n < best[1]):
                best = (sc, n)
        return best

    def msg3_first_subcarrier(self, ce_level: int) -> int:
        frac = self.rach[ce_level].msg3_subcarrier_range_start.fraction
        return min(self.n_ul_subcarriers - 1, int(frac * self.n_ul_subcarriers))

    # -- random access -----------------------------------------------------

    def on_rach_indication(self, ind: RachIndication, now: int):
        """Schedule a RAR for a detected preamble ending at ``now``.

        Returns the RAR grant, or ``None`` when the response window has no free
        NPDCCH candidate (the UE will try again).
        """
        ce = ind.ce_level_hint
        occasion = clock.unwrap(ind.sfn, ind.sf, now)
        ra_rnti = ra_rnti_for(occasion)
        window_end = now + self.rach[ce].response_window * self.period
        p = self.params
        rnti = self._alloc_rnti()
        probe = RarPdu(ind.subcarrier, 0, rnti, 0, 0, 0, 1).encode()
        rar_len = self._dl_duration(len(probe), p.dl_reps[ce])
        placed = self._place_dl(now, rar_len, deadline=window_end)
        msg3 = None
        if placed is not None:
            c, d = placed
            msg3_bytes = 4 + 9  # MAC header + RRCConnectionRequest
            msg3_len, _ = self._ul_duration(msg3_bytes, p.ul_reps[ce])
            msg3 = self._place_ul(d + rar_len + p.msg3_delay, msg3_len, self.msg3_first_subcarrier(ce))
        if placed is None or msg3 is None:
            self.counters["rar_dropped"] += 1
            self.tracer.emit(now, Tag.RACH, "mac", ra_rnti,
                             f"rar_dropped sc={ind.subcarrier} ce={ce} preamble_end={now} window_end={window_end}")
            return None
        c, d = placed
        sc, m3 = msg3
        rar = RarPdu(ind.subcarrier, 0, rnti, sc, m3 - (d + rar_len), msg3_len, p.ul_reps[ce])
        self.dl_timeline.reserve(c, self.dci_len, ("dci", ra_rnti))
        self.dl_timeline.reserve(d, rar_len, ("rar", ra_rnti))
        self.ul_timelines[sc].reserve(m3, msg3_len, ("msg3", rnti))
        self._queue_dci(c, Dci(ra_rnti, DciFormat.N1_RAR, RntiType.RA, self.dci_len, d - c, p.dl_reps[ce],
                               duration=rar_len, ce_level=ce),
                        note=f"preamble_end={now} tc_rnti={rnti}")
        self._queue_pdu(d, DlPdu(ra_rnti, rar.encode(), p.dl_reps[ce], rar_len, ce))
        self._queue_grant(m3, UlGrant(rnti, sc, msg3_len, p.ul_reps[ce], ce))
        timer = self.rach[ce].contention_resolution_timer * self.period
        self.ues[rnti] = UeSchedCtx(rnti, ce, "msg3_wait", msg3_deadline=m3 + msg3_len + timer)
        self.ues[rnti].ul_harq = {"start": m3, "duration": msg3_len, "sc": sc, "retx": 0, "reps": p.ul_reps[ce],
                                  "tbs": 16, "kind": "msg3"}
        self.counters["rar_sent"] += 1
        self.tracer.emit(now, Tag.RACH, "mac", ra_rnti,
                         f"rar_scheduled sc={ind.subcarrier} ce={ce} tc_rnti={rnti} preamble_end={now} "
                         f"dci_start={c} window_end={window_end} msg3_start={m3}")
        return rar

    def on_msg3(self, rnti: int, payload: bytes, now: int) -> bool:
        """Handle a decoded Msg3: arm contention resolution and queue Msg4."""
        ctx = self.ues.get(rnti)
        if ctx is None:
            self.tracer.emit(now, Tag.WARN, "mac", rnti, "msg3_unknown_rnti ignored")
            return False
        if ctx.state != "msg3_wait":
            self.tracer.emit(now, Tag.RACH, "mac", rnti, "msg3_duplicate ignored")
            return False
        try:
            pdu = MacPdu.decode(payload)
        except RadioDecodeError:
            self.tracer.emit(now, Tag.WARN, "mac", rnti, "msg3_undecodable")
            return False
        if pdu.lcid != LCID_CCCH or len(pdu.sdu) < CR_ID_LEN:
            self.tracer.emit(now, Tag.WARN, "mac", rnti, "msg3_not_ccch")
            return False
        timer = self.rach[ctx.ce_level].contention_resolution_timer * self.period
        ctx.state = "contention"
        ctx.contention_deadline = now + timer
        ctx.cr_id = pdu.sdu[:CR_ID_LEN]
        self.tracer.emit(now, Tag.RACH, "mac", rnti, f"msg3_received contention_expiry={now + timer}")
        setup = self.upper.on_ccch(rnti, pdu.sdu, now) if self.upper is not None else None
        if setup is not None:
            ctx.multitone = bool(getattr(self.upper, "last_multitone", False))
            ctx.dl_queue.appendleft({"sdu": setup, "lcid": LCID_CCCH, "cr_id": ctx.cr_id, "reply": True,
                                     "retx": 0, "queued": now})
        return True

    # -- downlink data -----------------------------------------------------

    def schedule_dl(self, rnti: int, payload: bytes, ce: int, now: int,
                    rnti_type: RntiType = RntiType.C, lookahead: int | None = None) -> TransportBlock:
        """Place one DL transport block (DCI on the CSS, data after the gap).

        ``lookahead`` restricts the DCI to candidates before ``now + lookahead``.
        """
        reps = self.params.dl_reps[ce]
        length = self._dl_duration(len(payload), reps)
        placed = self._place_dl(now, length, None if lookahead is None else now + lookahead - 1)
        if placed is None:
            raise Backpressure(f"no DL room for rnti {rnti} within {lookahead or self.params.horizon} subframes")
        c, d = placed
        self.dl_timeline.reserve(c, self.dci_len, ("dci", rnti))
        self.dl_timeline.reserve(d, length, ("pdsch", rnti))
        self._queue_dci(c, Dci(rnti, DciFormat.N1, rnti_type, self.dci_len, d - c, reps, duration=length,
                               ce_level=ce))
        self._queue_pdu(d, DlPdu(rnti, payload, reps, length, ce))
        return TransportBlock("dl", rnti, payload, reps, ce, d)

    def send_dl(self, rnti: int, sdu: bytes, expects_reply: bool = False) -> bool:
        ctx = self.ues.get(rnti)
        if ctx is None:
            return False
        ctx.dl_queue.append({"sdu": sdu, "lcid": LCID_DCCH, "cr_id": None, "reply": expects_reply, "retx": 0,
                             "queued": self.now})
        return True

    def _try_dl(self, ctx: UeSchedCtx, now: int) -> None:
        if ctx.dl_harq is not None or not ctx.dl_queue:
            return
        item = ctx.dl_queue[0]
        payload = MacPdu(item["lcid"], item["sdu"], cr_id=item["cr_id"]).encode()
        try:
            # just in time: later candidates stay free for random access responses
            tb = self.schedule_dl(ctx.rnti, payload, ctx.ce_level, now, ctx.rnti_type, lookahead=self.period)
        except Backpressure:
            return
        ctx.dl_queue.popleft()
        length = self._dl_duration(len(payload), tb.repetitions)
        item["ack_due"] = tb.start + length + self.params.harq_ack_delay
        ctx.dl_harq = item

    # -- uplink grants -----------------------------------------------------

    def _grant_ul(self, ctx: UeSchedCtx, now: int, nbytes: int, retx: bool) -> bool:
        p = self.params
        reps = p.ul_reps[ctx.ce_level]
        if retx:
            h = ctx.ul_harq
            length, tbs, multitone = h["duration"], h["tbs"], False
        else:
            length, tbs = self._ul_duration(nbytes, reps, ctx.multitone)
        for c in css_start_subframes(self.css, now, now + self.period):
            if not self.dl_timeline.is_free(c, self.dci_len):
                continue
            placed = self._place_ul(c + self.dci_len + p.ul_grant_delay, length)
            if placed is None:
                return False
            sc, start = placed
            if start - c > 0xFFFF:
                return False
            self.dl_timeline.reserve(c, self.dci_len, ("dci", ctx.rnti))
            self.ul_timelines[sc].reserve(start, length, ("pusch", ctx.rnti))
            self._queue_dci(c, Dci(ctx.rnti, DciFormat.N0, ctx.rnti_type, self.dci_len, start - c, reps, sc,
                                   length, retx, ctx.ce_level, tbs))
            self._queue_grant(start, UlGrant(ctx.rnti, sc, length, reps, ctx.ce_level))
            prev_retx = ctx.ul_harq["retx"] if (retx and ctx.ul_harq) else 0
            kind = ctx.ul_harq["kind"] if (retx and ctx.ul_harq) else "data"
            ctx.ul_harq = {"start": start, "duration": length, "sc": sc, "retx": prev_retx, "reps": reps,
                           "tbs": tbs, "kind": kind}
            ctx.want_ul = False
            ctx.last_ul = start + length
            return True
        return False

    # -- indications -------------------------------------------------------

    def on_rx(self, ind: RxIndication, now: int) -> None:
        ctx = self.ues.get(ind.rnti)
        if ctx is None:
            self.tracer.emit(now, Tag.WARN, "mac", ind.rnti, "rx_unknown_rnti")
            return
        if ctx.state == "msg3_wait" or (ctx.state == "contention" and ctx.ul_harq and ctx.ul_harq["kind"] == "msg3"):
            self.on_msg3(ind.rnti, ind.payload, now)
            return
        try:
            pdu = MacPdu.decode(ind.payload)
        except RadioDecodeError:
            self.tracer.emit(now, Tag.WARN, "mac", ind.rnti, "ul_pdu_undecodable")
            return
        if pdu.bsr and not ctx.bsr:
            ctx.ul_since = now
        ctx.bsr = pdu.bsr
        if pdu.lcid == LCID_DCCH and pdu.sdu and ctx.state == "connected" and self.upper is not None:
            self.upper.on_dcch(ind.rnti, pdu.sdu, now)

    def on_crc(self, ind: CrcIndication, now: int) -> None:
        ctx = self.ues.get(ind.rnti)
        if ctx is None or ctx.ul_harq is None:
            return
        h = ctx.ul_harq
        if ind.passed:
            self.tracer.emit(now, Tag.HARQ, "mac", ind.rnti, f"ul_ack kind={h['kind']}")
            ctx.ul_harq = None
            return
        self.tracer.emit(now, Tag.HARQ, "mac", ind.rnti, f"ul_nack kind={h['kind']} retx={h['retx']}")
        if h["retx"] >= self.params.harq_max_retx:
            self.tracer.emit(now, Tag.HARQ, "mac", ind.rnti, f"ul_max_retx kind={h['kind']} dropped")
            ctx.ul_harq = None
            return
        h["retx"] += 1
        h["pending_retx"] = True
        h["queued"] = now

    def on_harq(self, ind: HarqIndication, now: int) -> None:
        ctx = self.ues.get(ind.rnti)
        if ctx is None or ctx.dl_harq is None:
            return
        self._dl_feedback(ctx, ind.ack, now)

    def _dl_feedback(self, ctx: UeSchedCtx, ack: bool | None, now: int) -> None:
        item = ctx.dl_harq
        label = "ack" if ack else ("nack" if ack is False else "dtx")
        self.tracer.emit(now, Tag.HARQ, "mac", ctx.rnti, f"dl_{label} retx={item['retx']}")
        if ack:
            ctx.dl_harq = None
            if item["cr_id"] is not None and ctx.state == "contention":
                ctx.state = "connected"
                ctx.contention_deadline = None
                self.counters["connected"] += 1
                self.tracer.emit(now, Tag.RACH, "mac", ctx.rnti, "contention_resolved promoted=C-RNTI")
                if self.upper is not None:
                    self.upper.on_connected(ctx.rnti, now)
            if item["reply"]:
                ctx.want_ul = True
                ctx.ul_since = now
            return
        if item["retx"] >= self.params.harq_max_retx:
            self.tracer.emit(now, Tag.HARQ, "mac", ctx.rnti, "dl_max_retx dropped")
            ctx.dl_harq = None
            return
        item["retx"] += 1
        item["queued"] = now
        ctx.dl_harq = None
        ctx.dl_queue.appendleft(item)

    # -- per-tick ----------------------------------------------------------

    def release(self, rnti: int, now: int, reason: str) -> None:
        self.ues.pop(rnti, None)
        self.released.add(rnti)
        self.counters["released"] += 1
        self.tracer.emit(now, Tag.RACH, "mac", rnti, f"rnti_released reason={reason}")
        if self.upper is not None:
            self.upper.on_released(rnti, now)

    def tick(self, now: int, indications) -> tuple[DlConfigRequest, UlConfigRequest]:
        self.now = now
        for ind in indications:
            if isinstance(ind, RachIndication):
                self.on_rach_indication(ind, now)
            elif isinstance(ind, RxIndication):
                self.on_rx(ind, now)
            elif isinstance(ind, CrcIndication):
                self.on_crc(ind, now)
            elif isinstance(ind, HarqIndication):
                self.on_harq(ind, now)

        for rnti in sorted(self.ues):
            ctx = self.ues[rnti]
            if ctx.state == "msg3_wait" and now >= ctx.msg3_deadline:
                self.release(rnti, now, "msg3_missing")
            elif ctx.state == "contention" and now >= ctx.contention_deadline:
                self.release(rnti, now, "contention_timer")
            elif ctx.dl_harq is not None and now > ctx.dl_harq["ack_due"]:
                self._dl_feedback(ctx, None, now)

        for _, kind, rnti in sorted(self._pending_jobs(now)):
            ctx = self.ues[rnti]
            if kind == "dl":
                self._try_dl(ctx, now)
            elif kind == "ul_retx":
                h = ctx.ul_harq
                h["pending_retx"] = not self._grant_ul(ctx, now, 0, retx=True)
            else:
                self._grant_ul(ctx, now, max(ctx.bsr + 4, self.params.ul_poll_bytes) if kind == "ul" else
                               self.params.ul_poll_bytes, retx=False)

        return self._emit(now)

    def _pending_jobs(self, now: int):
        """``(priority, kind, rnti)`` for every UE wanting NPDCCH this subframe.

        Contention resolution goes first, then retransmissions, then the
        longest-waiting request.
        """
        p = self.params
        for rnti, ctx in self.ues.items():
            if ctx.dl_harq is None and ctx.dl_queue:
                item = ctx.dl_queue[0]
                cls = 0 if item["cr_id"] is not None else (1 if item["retx"] else 2)
                yield (cls, item["queued"], rnti), "dl", rnti
            h = ctx.ul_harq
            if h is not None and h.get("pending_retx"):
                yield (1, h["queued"], rnti), "ul_retx", rnti
            elif h is None and ctx.state == "connected":
                if ctx.bsr > 0 or ctx.want_ul:
                    yield (2, ctx.ul_since, rnti), "ul", rnti
                elif now - ctx.last_ul >= p.ul_poll_interval:
                    yield (3, ctx.last_ul + p.ul_poll_interval, rnti), "poll", rnti

    def _emit(self, now: int) -> tuple[DlConfigRequest, UlConfigRequest]:
        sfn, sf = clock.sfn_sf(now)
        dcis, pdus = self._dl_cfg.pop(now, ([], []))
        for dci, note in dcis:
            self.tracer.emit(now, Tag.DCI, "mac", dci.rnti,
                             f"dci_tx fmt={dci.fmt.name} type={dci.rnti_type.name} start={now} reps={dci.reps} "
                             f"delay={dci.delay} duration={dci.duration} ce={dci.ce_level}"
                             + (" retx=1" if dci.retx else "") + (f" {note}" if note else ""))
        grants = self._ul_cfg.pop(now, [])
        if now % 1024 == 0:
            self.dl_timeline.prune(now - 64)
            for tl in self.ul_timelines:
                tl.prune(now - 64)
        return (DlConfigRequest(sfn, sf, tuple(d for d, _ in dcis), tuple(pdus)),
                UlConfigRequest(sfn, sf, tuple(grants)))
