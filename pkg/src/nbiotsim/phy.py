"""Simulated NB-IoT radio: NPRACH detection, transport-block delivery, PNF glue.

Decoding is threshold-plus-Bernoulli with one draw per transport block: a
block decodes iff it was sent with at least ``required_reps[ce]``
repetitions and the seeded draw is not below ``loss_prob[ce]``.

The optional CRC fault reproduces the eNB PHY bug where uplink data packets
longer than 4 bytes fail decoding; the recovery flag stands in for the
``NB_IOT_CRC_RECOVERY`` build option.  The length test counts the user-data
bytes carried by the block (``app_len``), so signalling blocks are unaffected.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field

from . import clock
from .fapi import (CrcIndication, DlConfigRequest, HarqIndication, RachIndication, RxIndication,
                   UlConfigRequest)
from .trace import Tag, Tracer

CRC_BUG_MAX_LEN = 4
NUM_PREAMBLE_SUBCARRIERS = 48


@dataclass
class DecodeModel:
    required_reps: tuple = (1, 2, 4)
    rng_seed: int = 0
    loss_prob: tuple = (0.0, 0.0, 0.0)
    crc_bug_enabled: bool = False
    crc_recovery_enabled: bool = False
    enb_scrambling: bool = False
    # scripted detect outcomes, consumed one per preamble before falling back to the model
    preamble_script: tuple = ()

    def __post_init__(self):
        self.required_reps = tuple(int(r) for r in self.required_reps)
        self.loss_prob = tuple(float(p) for p in self.loss_prob)
        if len(self.required_reps) != 3 or len(self.loss_prob) != 3:
            raise ValueError("required_reps and loss_prob need one entry per CE level")
        if any(r < 1 for r in self.required_reps):
            raise ValueError("required repetitions must be >= 1")
        if any(b < a for a, b in zip(self.required_reps, self.required_reps[1:])):
            raise ValueError("required repetitions must not decrease with CE level")
        if any(not 0.0 <= p <= 1.0 for p in self.loss_prob):
            raise ValueError("loss probabilities must lie in [0, 1]")
        self.preamble_script = tuple(bool(x) for x in self.preamble_script)
        self.rng = random.Random(self.rng_seed)
        self._script_pos = 0

    def draw(self) -> float:
        return self.rng.random()

    def scripted_preamble(self) -> bool | None:
        if self._script_pos < len(self.preamble_script):
            self._script_pos += 1
            return self.preamble_script[self._script_pos - 1]
        return None


@dataclass(frozen=True)
class TransportBlock:
    direction: str  # "dl" or "ul"
    rnti: int
    payload: bytes
    repetitions: int = 1
    ce_level: int = 0
    start: int = 0
    # user-data bytes inside the block; None means the whole payload is user data
    app_len: int | None = None

    def __post_init__(self):
        if self.direction not in ("dl", "ul"):
            raise ValueError("direction must be 'dl' or 'ul'")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.ce_level not in (0, 1, 2):
            raise ValueError("ce_level must be 0..2")

    @property
    def user_data_len(self) -> int:
        return len(self.payload) if self.app_len is None else self.app_len


@dataclass(frozen=True)
class Delivery:
    payload: bytes | None

    @property
    def decoded(self) -> bool:
        return self.payload is not None

    @property
    def crc_fail(self) -> bool:
        return self.payload is None


CRC_FAIL = Delivery(None)


@dataclass(frozen=True)
class PreambleTx:
    ue_id: int
    subcarrier: int
    ce_level: int
    repetitions: int
    tx_power_dbm: int
    start: int

    def __post_init__(self):
        if not 0 <= self.subcarrier < NUM_PREAMBLE_SUBCARRIERS:
            raise ValueError("subcarrier must be 0..47")
        if self.ce_level not in (0, 1, 2):
            raise ValueError("ce_level must be 0..2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def detect_preamble(tx: PreambleTx, model: DecodeModel) -> RachIndication | None:
    scripted = model.scripted_preamble()
    if scripted is None:
        ok = tx.repetitions >= model.required_reps[tx.ce_level] and model.draw() >= model.loss_prob[tx.ce_level]
    else:
        ok = scripted
    if not ok:
        return None
    sfn, sf = clock.sfn_sf(tx.start)
    return RachIndication(sfn, sf, tx.subcarrier, tx.ce_level)


def detect_occasion(txs, model: DecodeModel) -> list[RachIndication]:
    """Detect all preambles of one NPRACH occasion.

    Preambles sharing a subcarrier collide: at most one indication is
    produced for them and contention is left to Msg4.
    """
    groups = defaultdict(list)
    for tx in sorted(txs, key=lambda t: (t.start, t.subcarrier, t.ue_id)):
        groups[(tx.start, tx.subcarrier)].append(tx)
    out = []
    for key in sorted(groups):
        hits = [detect_preamble(tx, model) for tx in groups[key]]
        found = [h for h in hits if h is not None]
        if found:
            out.append(found[0])
    return out


def deliver(tb: TransportBlock, model: DecodeModel, rx_scrambling: bool | None = None) -> Delivery:
    if tb.direction == "ul" and model.crc_bug_enabled and tb.user_data_len > CRC_BUG_MAX_LEN:
        if not model.crc_recovery_enabled:
            return CRC_FAIL
    if tb.direction == "dl" and rx_scrambling is not None and rx_scrambling != model.enb_scrambling:
        return CRC_FAIL
    if tb.repetitions < model.required_reps[tb.ce_level]:
        return CRC_FAIL
    if model.draw() < model.loss_prob[tb.ce_level]:
        return CRC_FAIL
    return Delivery(tb.payload)


# ---------------------------------------------------------------------------
# NPRACH resources


@dataclass(frozen=True)
class NprachConfig:
    period: int = 40
    start_offset: int = 8
    subcarriers_per_ce: int = 12
    subcarrier_offsets: tuple = (0, 12, 24)

    def is_occasion(self, abs_sf: int) -> bool:
        return abs_sf % self.period == self.start_offset

    def next_occasion(self, abs_sf: int) -> int:
        return abs_sf + (self.start_offset - abs_sf) % self.period

    def subcarriers(self, ce_level: int) -> range:
        first = self.subcarrier_offsets[ce_level]
        return range(first, first + self.subcarriers_per_ce)

    def ce_of_subcarrier(self, subcarrier: int) -> int:
        for ce in range(3):
            if subcarrier in self.subcarriers(ce):
                return ce
        raise ValueError(f"subcarrier {subcarrier} is outside every NPRACH region")


def preamble_duration(repetitions: int) -> int:
    """Subframes occupied by a format-0 preamble (5.6 ms per repetition, rounded up)."""
    return (56 * repetitions + 9) // 10


# ---------------------------------------------------------------------------
# radio medium / PNF side


@dataclass
class _UlTx:
    ue: object
    tb: TransportBlock
    end: int


@dataclass
class _DlTx:
    tb: TransportBlock
    end: int


class Phy:
    """The shared air interface plus the PNF's view of the eNB PHY.

    UEs call :meth:`transmit_preamble`, :meth:`transmit_ul` and
    :meth:`send_harq`; the stack side talks to it only through FAPI messages.
    """

    def __init__(self, model: DecodeModel, tracer: Tracer, nprach: NprachConfig | None = None):
        self.model = model
        self.tracer = tracer
        self.nprach = nprach or NprachConfig()
        self.ues: list = []
        self._preambles: dict[int, list[PreambleTx]] = defaultdict(list)  # keyed by end subframe
        self._dl: dict[int, list[_DlTx]] = defaultdict(list)
        self._ul: dict[tuple[int, int], list[_UlTx]] = defaultdict(list)
        self._ul_expected: dict[tuple[int, int], object] = {}
        self._harq: dict[int, list[tuple[int, bool]]] = defaultdict(list)
        self.stats = defaultdict(int)

    def attach_ue(self, ue) -> None:
        self.ues.append(ue)
        self.ues.sort(key=lambda u: u.ue_id)

    # -- UE-facing ---------------------------------------------------------

    def transmit_preamble(self, tx: PreambleTx) -> int:
        end = tx.start + preamble_duration(tx.repetitions)
        self._preambles[end].append(tx)
        self.stats["preambles"] += 1
        return end

    def transmit_ul(self, ue, tb: TransportBlock, duration: int) -> None:
        self._ul[(tb.rnti, tb.start)].append(_UlTx(ue, tb, tb.start + duration))

    def send_harq(self, rnti: int, ack: bool, at: int) -> None:
        self._harq[at].append((rnti, ack))

    # -- tick processing ---------------------------------------------------

    def phy_stage(self, now: int) -> list:
        """Resolve everything finishing at ``now``; return FAPI indications."""
        out = []
        sfn, sf = clock.sfn_sf(now)

        txs = self._preambles.pop(now, [])
        if txs:
            found = detect_occasion(txs, self.model)
            hit = {(i.subcarrier) for i in found}
            for tx in txs:
                state = "detected" if tx.subcarrier in hit else "missed"
                self.tracer.emit(now, Tag.RACH, "phy", tx.ue_id,
                                 f"preamble_{state} sc={tx.subcarrier} ce={tx.ce_level} start={tx.start}")
            out.extend(found)

        for key in [k for k, v in self._ul.items() if v and v[0].end == now]:
            txs = self._ul.pop(key)
            grant = self._ul_expected.pop(key, None)
            rnti, start = key
            if grant is None:
                self.tracer.emit(now, Tag.WARN, "phy", rnti, f"ul_without_grant start={start}")
                continue
            winner = txs[0] if len(txs) == 1 else txs[self.model.rng.randrange(len(txs))]
            if len(txs) > 1:
                self.tracer.emit(now, Tag.RACH, "phy", rnti,
                                 f"ul_collision n={len(txs)} captured_ue={winner.ue.ue_id}")
            result = deliver(winner.tb, self.model)
            if result.decoded:
                out.append(RxIndication(rnti, result.payload, sfn, sf))
            out.append(CrcIndication(rnti, result.decoded, sfn, sf))

        # grants whose transmission never showed up
        for key in [k for k, g in self._ul_expected.items() if k[1] + g.duration <= now]:
            rnti, start = key
            del self._ul_expected[key]
            out.append(CrcIndication(rnti, False, sfn, sf))
            self.tracer.emit(now, Tag.HARQ, "phy", rnti, f"ul_dtx start={start}")

        for rnti, ack in self._harq.pop(now, []):
            out.append(HarqIndication(rnti, ack, sfn, sf))

        for dl in self._dl.pop(now, []):
            listeners = [ue for ue in self.ues if ue.monitors(dl.tb.rnti)]
            for ue in listeners:
                result = deliver(dl.tb, self.model, rx_scrambling=ue.scrambling)
                ue.on_dl_pdu(now, dl.tb, result)
        return out

    def apply_dl_config(self, now: int, req: DlConfigRequest) -> None:
        for dci in req.dci_list:
            for ue in self.ues:
                if ue.monitors(dci.rnti):
                    ue.on_dci(now, dci)
        for pdu in req.pdu_list:
            tb = TransportBlock("dl", pdu.rnti, pdu.payload, pdu.reps, pdu.ce_level, now)
            self._dl[now + pdu.duration].append(_DlTx(tb, now + pdu.duration))

    def apply_ul_config(self, now: int, req: UlConfigRequest) -> None:
        for grant in req.grants:
            self._ul_expected[(grant.rnti, now)] = grant
