"""Simulated BC95-class UE: NV flags, cell search, random access, RRC and NAS attach, NAS datagrams."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator

from .config import EnbConfig, RachCeConfig
from .fapi import Dci, DciFormat, RntiType
from .mac import ra_rnti_for
from .mme import auth_res
from .nas import (AttachAccept, AttachComplete, AttachRequest, AuthenticationReject, AuthenticationRequest,
                  AuthenticationResponse, EsmDataTransport, IdentityRequest, IdentityResponse, NasDecodeError,
                  SecurityModeCommand, SecurityModeComplete, decode_nas, encode_nas, nas_name)
from .phy import NprachConfig, PreambleTx, TransportBlock, preamble_duration
from .radio import (CR_ID_LEN, LCID_CCCH, LCID_DCCH, LCID_PADDING, DLInformationTransfer, MacPdu,
                    RadioDecodeError, RarPdu, RRCConnectionRequest, RRCConnectionSetup, RRCConnectionSetupComplete,
                    ULInformationTransfer, decode_rrc, encode_rrc, rrc_name)
from .trace import Tag, Tracer

MAC_HEADER_LEN = 4
MAX_SOCKETS = 7
POWER_RAMP_DB = 2


class UePhase(str, Enum):
    POWERED_ON = "POWERED_ON"
    SEARCHING = "SEARCHING"
    CAMPED = "CAMPED"
    RACH = "RACH"
    RRC_CONNECTED = "RRC_CONNECTED"
    ATTACHED = "ATTACHED"


@dataclass
class UeNvConfig:
    """Non-volatile modem settings; they survive AT+NRB."""

    autoconnect: bool = False
    scrambling: bool = True
    si_avoid: bool = True
    pco_ie_epco: bool = False
    release_version: int = 13
    multitone: bool = False
    pdp_contexts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # vendor keys stored verbatim


@dataclass
class Socket:
    id: int
    local_port: int
    listen: bool = False
    proto: int = 17


@dataclass(frozen=True)
class UeTiming:
    camp_delay: int = 40
    harq_ack_delay: int = 12
    t3410: int = 15000


# ---------------------------------------------------------------------------
# random access escalation


def attempt_plan(rach: tuple[RachCeConfig, ...], start_ce: int = 0) -> Iterator[tuple[int, int, int]]:
    """Yield ``(ce_level, attempt_within_level, repetitions)`` for one attach attempt."""
    for ce in range(start_ce, len(rach)):
        cfg = rach[ce]
        for attempt in range(cfg.max_preamble_attempts_per_ce):
            yield ce, attempt, cfg.repetitions_per_attempt


@dataclass(frozen=True)
class RachOutcome:
    success: bool
    ce_level: int
    preambles: int
    rnti: int | None = None


def rach_attempt_loop(rach: tuple[RachCeConfig, ...], attempt: Callable[[int, int, int], int | None],
                      start_ce: int = 0) -> RachOutcome:
    """Run the preamble/escalation loop against ``attempt(ce, index, reps)``.

    ``attempt`` returns the temporary C-RNTI when the access succeeded and
    ``None`` otherwise.
    """
    n = 0
    ce = start_ce
    for ce, idx, reps in attempt_plan(rach, start_ce):
        n += 1
        rnti = attempt(ce, idx, reps)
        if rnti is not None:
            return RachOutcome(True, ce, n, rnti)
    return RachOutcome(False, ce, n)


class RachProcedure:
    """Incremental form of :func:`rach_attempt_loop` driven by subframe ticks."""

    def __init__(self, rach: tuple[RachCeConfig, ...], start_ce: int = 0):
        self.rach = rach
        self._plan = attempt_plan(rach, start_ce)
        self.ce, self.attempt, self.reps = next(self._plan)
        self.preambles = 0
        self.state = "wait_occasion"
        self.tx_at = 0
        self.subcarrier = 0
        self.ra_rnti = 0
        self.preamble_end = 0
        self.rar_deadline = 0
        self.contention_deadline = 0
        self.cr_id = b""

    @property
    def tx_power_dbm(self) -> int:
        return self.rach[self.ce].preamble_initial_target_power_dbm + POWER_RAMP_DB * self.attempt

    def next_attempt(self) -> bool:
        """Move to the next attempt; ``False`` once every CE level is exhausted."""
        try:
            self.ce, self.attempt, self.reps = next(self._plan)
        except StopIteration:
            self.state = "failed"
            return False
        self.state = "wait_occasion"
        return True


# ---------------------------------------------------------------------------
# UE


@dataclass(frozen=True)
class AtExchange:
    abs_sf: int
    command: str
    responses: tuple


class Ue:
    def __init__(self, ue_id: int, imsi: str, k: bytes, enb: EnbConfig, *, ce_level: int = 0,
                 nv: UeNvConfig | None = None, tracer: Tracer | None = None, phy=None, seed: int = 0,
                 timing: UeTiming | None = None, nprach: NprachConfig | None = None):
        if len(k) != 16:
            raise ValueError("K must be 16 bytes")
        if ce_level not in (0, 1, 2):
            raise ValueError("ce_level must be 0..2")
        self.ue_id = ue_id
        self.imsi = imsi
        self.k = bytes(k)
        self.enb = enb
        self.start_ce = ce_level
        self.nv = nv or UeNvConfig()
        self.tracer = tracer or Tracer()
        self.phy = phy
        self.rng = random.Random(f"{seed}:ue:{ue_id}")
        self.timing = timing or UeTiming()
        self.nprach = nprach or NprachConfig()
        self.period = enb.css.period
        self.at_queue: deque = deque()
        self.at_log: list[AtExchange] = []
        self._last_at = -1
        self.now = 0
        self.preambles_sent = 0
        self.rach_results: list[RachOutcome] = []
        self._reset_volatile()

    # -- state -------------------------------------------------------------

    def _reset_volatile(self) -> None:
        self.phase = UePhase.POWERED_ON
        self.earfcn_lock: tuple[int, int] | None = None
        self.search_started = 0
        self.attach_requested = False
        self.sockets: dict[int, Socket] = {}
        self.assigned_ip: str | None = None
        self.rnti: int | None = None
        self.rach: RachProcedure | None = None
        self.expected_dl: dict[tuple[int, int], str] = {}
        self.ul_queue: deque = deque()
        self.last_ul: tuple | None = None
        self.nas_state = "idle"
        self.t3410_deadline: int | None = None
        self._rach_preambles = 0

    @property
    def scrambling(self) -> bool:
        return self.nv.scrambling

    def _trace(self, tag: Tag, detail: str) -> None:
        self.tracer.emit(self.now, tag, "ue", self.ue_id, detail)

    def reboot(self) -> None:
        self._reset_volatile()
        self._trace(Tag.RRC_DEBUG_ASN, "reboot")

    def lock_earfcn(self, mode: int, earfcn: int) -> None:
        self.earfcn_lock = (mode, earfcn)
        if self.phase in (UePhase.POWERED_ON, UePhase.SEARCHING, UePhase.CAMPED):
            self.phase = UePhase.SEARCHING
            self.search_started = self.now

    def request_attach(self) -> None:
        self.attach_requested = True

    def detach(self) -> None:
        self.attach_requested = False
        if self.phase in (UePhase.RACH, UePhase.RRC_CONNECTED, UePhase.ATTACHED):
            self._drop_connection("detach")

    def open_socket(self, port: int, listen: bool) -> int:
        if len(self.sockets) >= MAX_SOCKETS or any(s.local_port == port for s in self.sockets.values()):
            raise ValueError("socket unavailable")
        sid = next(i for i in range(MAX_SOCKETS) if i not in self.sockets)
        self.sockets[sid] = Socket(sid, port, listen)
        return sid

    def close_socket(self, sid: int) -> None:
        del self.sockets[sid]

    def send_datagram(self, sid: int, ip: str, port: int, payload: bytes) -> None:
        if self.phase != UePhase.ATTACHED:
            raise RuntimeError("not attached")
        if sid not in self.sockets:
            raise KeyError(sid)
        self._send_nas(EsmDataTransport(ip, port, payload))

    def enqueue_at(self, line: str, at: int | None = None) -> None:
        self.at_queue.append((at, line))

    # -- NAS / RRC ----------------------------------------------------------

    def _queue_rrc(self, msg, app_len: int = 0) -> None:
        self._trace(Tag.RRC_DEBUG_ASN, f"tx {rrc_name(msg)}")
        self.ul_queue.append((encode_rrc(msg), app_len))

    def _send_nas(self, nas, initial: bool = False) -> None:
        self._trace(Tag.NAS_DBG_NAS_MSG, f"tx {nas_name(nas)}")
        app_len = len(nas.payload) if isinstance(nas, EsmDataTransport) else 0
        if initial:
            self._queue_rrc(RRCConnectionSetupComplete(encode_nas(nas)), app_len)
        else:
            self._queue_rrc(ULInformationTransfer(encode_nas(nas)), app_len)

    def _on_nas(self, nas) -> None:
        self._trace(Tag.NAS_DBG_NAS_MSG, f"rx {nas_name(nas)}")
        if isinstance(nas, IdentityRequest):
            self._send_nas(IdentityResponse(self.imsi))
        elif isinstance(nas, AuthenticationRequest):
            self._send_nas(AuthenticationResponse(auth_res(self.k, nas.rand)))
        elif isinstance(nas, AuthenticationReject):
            self._trace(Tag.NAS_DBG_NAS_MSG, "attach_rejected")
            self.attach_requested = False
            self._drop_connection("auth_reject")
        elif isinstance(nas, SecurityModeCommand):
            self.nas_state = "secured"
            self._send_nas(SecurityModeComplete())
        elif isinstance(nas, AttachAccept):
            self.assigned_ip = nas.ip
            self._send_nas(AttachComplete())
            self.phase = UePhase.ATTACHED
            self.nas_state = "attached"
            self.t3410_deadline = None
            self._trace(Tag.NAS_DBG_NAS_MSG, f"attached ip={nas.ip}")
        else:
            self._trace(Tag.NAS_DBG_NAS_MSG, f"ignored {nas_name(nas)}")

    def _drop_connection(self, reason: str) -> None:
        self.rnti = None
        self.rach = None
        self.expected_dl.clear()
        self.ul_queue.clear()
        self.last_ul = None
        self.t3410_deadline = None
        self.nas_state = "idle"
        self.assigned_ip = None
        self.phase = UePhase.CAMPED
        self._trace(Tag.RRC_DEBUG_ASN, f"connection_dropped reason={reason}")

    # -- PHY callbacks -------------------------------------------------------

    def monitors(self, rnti: int) -> bool:
        if self.rnti is not None and rnti == self.rnti:
            return True
        r = self.rach
        return r is not None and r.state == "wait_rar" and rnti == r.ra_rnti

    def on_dci(self, now: int, dci: Dci) -> None:
        self.now = now
        r = self.rach
        if dci.rnti_type == RntiType.RA:
            if r is None or r.state != "wait_rar" or dci.rnti != r.ra_rnti or now > r.rar_deadline:
                return
            end = now + dci.delay + dci.duration
            self.expected_dl[(dci.rnti, end)] = "rar"
            r.rar_deadline = max(r.rar_deadline, end)
            self._trace(Tag.DCI, f"dci_rx fmt={dci.fmt.name} rnti={dci.rnti} type=RA data_end={end}")
            return
        if dci.rnti != self.rnti:
            return
        self._trace(Tag.DCI, f"dci_rx fmt={dci.fmt.name} rnti={dci.rnti} type={dci.rnti_type.name} "
                             f"delay={dci.delay} duration={dci.duration}" + (" retx=1" if dci.retx else ""))
        if dci.fmt == DciFormat.N1:
            self.expected_dl[(dci.rnti, now + dci.delay + dci.duration)] = "dl"
        elif dci.fmt == DciFormat.N0:
            self._on_ul_grant(now, dci)

    def _on_ul_grant(self, now: int, dci: Dci) -> None:
        start = now + dci.delay
        if dci.retx:
            if self.last_ul is None:
                return
            payload, app_len = self.last_ul
            if self.rach is not None and self.rach.state == "wait_msg4":
                t = self.enb.rach[self.rach.ce].contention_resolution_timer * self.period
                self.rach.contention_deadline = max(self.rach.contention_deadline, start + dci.duration + t)
        else:
            room = max(0, dci.tbs - MAC_HEADER_LEN) if dci.tbs else 1 << 16
            sdu, app_len = b"", 0
            if self.ul_queue and len(self.ul_queue[0][0]) <= room:
                sdu, app_len = self.ul_queue.popleft()
            bsr = sum(len(m) for m, _ in self.ul_queue)
            payload = MacPdu(LCID_DCCH if sdu else LCID_PADDING, sdu, bsr=bsr).encode()
            self.last_ul = (payload, app_len)
        tb = TransportBlock("ul", dci.rnti, payload, max(1, dci.data_reps), dci.ce_level, start, app_len=app_len)
        if self.phy is not None:
            self.phy.transmit_ul(self, tb, dci.duration)

    def on_dl_pdu(self, now: int, tb: TransportBlock, result) -> None:
        self.now = now
        kind = self.expected_dl.pop((tb.rnti, now), None)
        if kind is None:
            return
        if kind == "rar":
            if result.decoded:
                self._on_rar(now, result.payload)
            return
        if result.crc_fail:
            self._harq(now, tb.rnti, False)
            return
        try:
            pdu = MacPdu.decode(result.payload)
        except RadioDecodeError:
            self._harq(now, tb.rnti, False)
            return
        r = self.rach
        if pdu.cr_id is not None:
            if r is None or r.state != "wait_msg4":
                return
            if pdu.cr_id != r.cr_id:
                self._trace(Tag.RACH, "contention_lost")
                self.rnti = None
                self._attempt_failed(now)
                return
            self._harq(now, tb.rnti, True)
            self._on_contention_won(now)
        else:
            self._harq(now, tb.rnti, True)
        if pdu.sdu and pdu.lcid in (LCID_CCCH, LCID_DCCH):
            self._on_rrc(pdu.sdu)

    def _harq(self, now: int, rnti: int, ack: bool) -> None:
        self._trace(Tag.HARQ, f"dl_{'ack' if ack else 'nack'} rnti={rnti}")
        if self.phy is not None:
            self.phy.send_harq(rnti, ack, now + self.timing.harq_ack_delay)

    def _on_rrc(self, sdu: bytes) -> None:
        try:
            msg = decode_rrc(sdu)
        except RadioDecodeError as exc:
            self._trace(Tag.RRC_DEBUG_ASN, f"rx_undecodable {exc}")
            return
        self._trace(Tag.RRC_DEBUG_ASN, f"rx {rrc_name(msg)}")
        if isinstance(msg, RRCConnectionSetup):
            self._send_nas(AttachRequest(self.imsi, self.nv.pco_ie_epco), initial=True)
            self.nas_state = "attaching"
            self.t3410_deadline = self.now + self.timing.t3410
        elif isinstance(msg, DLInformationTransfer):
            try:
                nas = decode_nas(msg.nas)
            except NasDecodeError as exc:
                self._trace(Tag.NAS_DBG_NAS_MSG, f"rx_undecodable {exc}")
                return
            self._on_nas(nas)

    # -- random access -----------------------------------------------------

    def _start_rach(self, now: int) -> None:
        self.phase = UePhase.RACH
        self.rach = RachProcedure(self.enb.rach, self.start_ce)
        self._rach_preambles = 0
        self.rach.tx_at = self.nprach.next_occasion(now + 1)
        self._trace(Tag.RACH, f"rach_start ce={self.rach.ce}")

    def _send_preamble(self, now: int) -> None:
        r = self.rach
        sc = self.rng.choice(self.nprach.subcarriers(r.ce))
        r.subcarrier = sc
        r.ra_rnti = ra_rnti_for(now)
        tx = PreambleTx(self.ue_id, sc, r.ce, r.reps, r.tx_power_dbm, now)
        r.preamble_end = now + preamble_duration(r.reps)
        if self.phy is not None:
            self.phy.transmit_preamble(tx)
        window = self.enb.rach[r.ce].response_window * self.period
        r.rar_deadline = r.preamble_end + window
        r.state = "wait_rar"
        r.preambles += 1
        self._rach_preambles += 1
        self.preambles_sent += 1
        self._trace(Tag.RACH, f"preamble_tx sc={sc} ce={r.ce} attempt={r.attempt + 1} reps={r.reps} "
                              f"power={r.tx_power_dbm} end={r.preamble_end} ra_rnti={r.ra_rnti}")

    def _on_rar(self, now: int, payload: bytes) -> None:
        r = self.rach
        if r is None or r.state != "wait_rar":
            return
        try:
            rar = RarPdu.decode(payload)
        except RadioDecodeError:
            return
        if rar.rapid != r.subcarrier:
            return
        self.rnti = rar.temp_crnti
        start = now + rar.msg3_delay
        identity = bytes(self.rng.getrandbits(8) for _ in range(5))
        req = RRCConnectionRequest(identity, 1, self.nv.release_version, self.nv.multitone)
        sdu = encode_rrc(req)
        r.cr_id = sdu[:CR_ID_LEN]
        payload = MacPdu(LCID_CCCH, sdu).encode()
        self.last_ul = (payload, 0)
        tb = TransportBlock("ul", rar.temp_crnti, payload, rar.msg3_reps, r.ce, start, app_len=0)
        if self.phy is not None:
            self.phy.transmit_ul(self, tb, rar.msg3_duration)
        timer = self.enb.rach[r.ce].contention_resolution_timer * self.period
        r.contention_deadline = start + rar.msg3_duration + timer
        r.state = "wait_msg4"
        self._trace(Tag.RACH, f"rar_rx tc_rnti={rar.temp_crnti} msg3_start={start} sc={rar.msg3_subcarrier}")
        self._trace(Tag.RRC_DEBUG_ASN, f"tx {rrc_name(req)}")

    def _on_contention_won(self, now: int) -> None:
        r = self.rach
        outcome = RachOutcome(True, r.ce, self._rach_preambles, self.rnti)
        self.rach_results.append(outcome)
        self._trace(Tag.RACH, f"rach_success ce={r.ce} preambles={self._rach_preambles} rnti={self.rnti}")
        self.rach = None
        self.phase = UePhase.RRC_CONNECTED

    def _attempt_failed(self, now: int) -> None:
        r = self.rach
        self.rnti = None
        if r.next_attempt():
            r.tx_at = self.nprach.next_occasion(now + 1)
            return
        outcome = RachOutcome(False, r.ce, self._rach_preambles)
        self.rach_results.append(outcome)
        self._trace(Tag.RACH, f"rach_failure preambles={self._rach_preambles}")
        self.rach = None
        self.attach_requested = False
        self.phase = UePhase.CAMPED

    # -- tick --------------------------------------------------------------

    def tick(self, now: int) -> None:
        self.now = now
        if self.phase == UePhase.POWERED_ON:
            self.phase = UePhase.SEARCHING
            self.search_started = now
        elif self.phase == UePhase.SEARCHING:
            cell = self.enb.cell_earfcn
            if (self.earfcn_lock is not None and cell is not None and self.earfcn_lock[1] == cell
                    and now >= self.search_started + self.timing.camp_delay):
                self.phase = UePhase.CAMPED
                self._trace(Tag.RRC_DEBUG_ASN, f"camped earfcn={cell}")
                if self.nv.autoconnect:
                    self.attach_requested = True

        if self.phase == UePhase.CAMPED and self.attach_requested and self.rach is None:
            self._start_rach(now)

        r = self.rach
        if r is not None:
            if r.state == "wait_occasion" and now >= r.tx_at:
                if self.nprach.is_occasion(now):
                    self._send_preamble(now)
                else:
                    r.tx_at = self.nprach.next_occasion(now)
            elif r.state == "wait_rar" and now > r.rar_deadline:
                self._trace(Tag.RACH, f"rar_timeout attempt={r.attempt + 1} ce={r.ce}")
                self._attempt_failed(now)
            elif r.state == "wait_msg4" and now > r.contention_deadline:
                self._trace(Tag.RACH, "contention_timeout")
                self._attempt_failed(now)

        if self.t3410_deadline is not None and now >= self.t3410_deadline:
            self._trace(Tag.NAS_DBG_NAS_MSG, "t3410_expired attach_aborted")
            self.attach_requested = False
            self._drop_connection("t3410")

        self._run_at(now)

    def _run_at(self, now: int) -> None:
        if not self.at_queue:
            return
        at, line = self.at_queue[0]
        due = at if at is not None else self._last_at + 1
        if now < due:
            return
        self.at_queue.popleft()
        self._last_at = now
        from .at import execute_at

        responses, _ = execute_at(line, self)
        self.at_log.append(AtExchange(now, line, tuple(responses)))
