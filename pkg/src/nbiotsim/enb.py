"""eNB RRC and S1AP client: connection setup and NAS relay between UE and MME."""

from __future__ import annotations

from dataclasses import dataclass

from .nas import AuthenticationReject, NasDecodeError, decode_nas, encode_nas, nas_name
from .radio import (DLInformationTransfer, RRCConnectionRequest, RRCConnectionSetup, RRCConnectionSetupComplete,
                    RadioDecodeError, ULInformationTransfer, decode_rrc, encode_rrc, rrc_name)
from .s1ap import (DownlinkNASTransport, InitialUEMessage, S1apDecodeError, S1SetupRequest, S1SetupResponse,
                   UplinkNASTransport, decode_s1ap, encode_s1ap, message_type)
from .trace import Tag, Tracer


@dataclass
class RrcUeCtx:
    rnti: int
    enb_ue_id: int
    mme_ue_id: int | None = None
    connected: bool = False
    release: int = 13
    multitone: bool = False


class EnbRrc:
    """RRC entity plus the eNB end of the S1 association.

    ``s1`` is a frame endpoint towards the MME; ``mac`` is the scheduler
    used to queue downlink RRC messages.
    """

    def __init__(self, tracer: Tracer, s1, enb_id: int = 0xE00, plmn: str = "00101", mac=None):
        self.tracer = tracer
        self.s1 = s1
        self.enb_id = enb_id
        self.plmn = plmn
        self.mac = mac
        self.contexts: dict[int, RrcUeCtx] = {}
        self.by_enb_ue_id: dict[int, RrcUeCtx] = {}
        self.released: set[int] = set()
        self.s1_ready = False
        self.last_multitone = False
        self._next_enb_ue_id = 1
        self.initial_ue_messages: dict[int, int] = {}

    # -- S1 ----------------------------------------------------------------

    def _send_s1(self, msg, now: int, entity: int) -> None:
        self.tracer.emit(now, Tag.S1AP, "rrc", entity, f"{message_type(msg)} dir=enb->mme")
        self.s1.send(encode_s1ap(msg))

    def start(self, now: int) -> None:
        self._send_s1(S1SetupRequest(self.enb_id, self.plmn), now, 0)

    def pump_s1(self, now: int) -> None:
        while True:
            frame = self.s1.recv(0.0)
            if frame is None:
                return
            try:
                msg = decode_s1ap(frame)
            except S1apDecodeError as exc:
                self.tracer.emit(now, Tag.WARN, "rrc", 0, f"s1ap_decode_error {exc}")
                continue
            self.on_s1(msg, now)

    def on_s1(self, msg, now: int) -> None:
        if isinstance(msg, S1SetupResponse):
            self.s1_ready = True
            return
        if isinstance(msg, DownlinkNASTransport):
            ctx = self.by_enb_ue_id.get(msg.enb_ue_id)
            if ctx is None or ctx.rnti not in self.contexts:
                self.tracer.emit(now, Tag.WARN, "rrc", msg.enb_ue_id, "dl_nas_for_unknown_context discarded")
                return
            ctx.mme_ue_id = msg.mme_ue_id
            rrc = DLInformationTransfer(encode_nas(msg.nas))
            self.tracer.emit(now, Tag.RRC_DEBUG_ASN, "rrc", ctx.rnti, f"tx {rrc_name(rrc)} nas={nas_name(msg.nas)}")
            if self.mac is not None:
                expects_reply = not isinstance(msg.nas, AuthenticationReject)
                self.mac.send_dl(ctx.rnti, encode_rrc(rrc), expects_reply=expects_reply)
            return
        self.tracer.emit(now, Tag.WARN, "rrc", 0, f"unexpected_s1ap {type(msg).__name__}")

    # -- RRC ---------------------------------------------------------------

    def rrc_handle(self, rnti: int, msg, now: int):
        """Process one uplink RRC message.

        Returns ``(downlink_rrc, s1ap_message)``; either may be ``None``.
        """
        self.tracer.emit(now, Tag.RRC_DEBUG_ASN, "rrc", rnti, f"rx {rrc_name(msg)}")
        if isinstance(msg, RRCConnectionRequest):
            ctx = RrcUeCtx(rnti, self._next_enb_ue_id, release=msg.release, multitone=msg.multitone)
            self._next_enb_ue_id += 1
            self.contexts[rnti] = ctx
            self.by_enb_ue_id[ctx.enb_ue_id] = ctx
            self.released.discard(rnti)
            self.last_multitone = msg.multitone
            return RRCConnectionSetup(), None
        ctx = self.contexts.get(rnti)
        if ctx is None:
            self.tracer.emit(now, Tag.WARN, "rrc", rnti, f"nas_for_stale_context {rrc_name(msg)} discarded")
            return None, None
        try:
            nas = decode_nas(msg.nas) if hasattr(msg, "nas") else None
        except NasDecodeError as exc:
            self.tracer.emit(now, Tag.WARN, "rrc", rnti, f"nas_decode_error {exc}")
            return None, None
        if isinstance(msg, RRCConnectionSetupComplete):
            if ctx.enb_ue_id in self.initial_ue_messages:
                self.tracer.emit(now, Tag.WARN, "rrc", rnti, "duplicate_setup_complete ignored")
                return None, None
            self.initial_ue_messages[ctx.enb_ue_id] = now
            return None, InitialUEMessage(ctx.enb_ue_id, nas)
        if isinstance(msg, ULInformationTransfer):
            return None, UplinkNASTransport(ctx.mme_ue_id or 0, ctx.enb_ue_id, nas)
        self.tracer.emit(now, Tag.WARN, "rrc", rnti, f"unexpected_ul_rrc {rrc_name(msg)}")
        return None, None

    def _decode(self, rnti: int, sdu: bytes, now: int):
        try:
            return decode_rrc(sdu)
        except RadioDecodeError as exc:
            self.tracer.emit(now, Tag.WARN, "rrc", rnti, f"rrc_decode_error {exc}")
            return None

    # callbacks from the MAC scheduler

    def on_ccch(self, rnti: int, sdu: bytes, now: int) -> bytes | None:
        msg = self._decode(rnti, sdu, now)
        if not isinstance(msg, RRCConnectionRequest):
            return None
        dl, _ = self.rrc_handle(rnti, msg, now)
        self.tracer.emit(now, Tag.RRC_DEBUG_ASN, "rrc", rnti, f"tx {rrc_name(dl)}")
        return encode_rrc(dl)

    def on_dcch(self, rnti: int, sdu: bytes, now: int) -> None:
        msg = self._decode(rnti, sdu, now)
        if msg is None:
            return
        _, s1 = self.rrc_handle(rnti, msg, now)
        if s1 is not None:
            ctx = self.contexts[rnti]
            self._send_s1(s1, now, ctx.enb_ue_id)

    def on_connected(self, rnti: int, now: int) -> None:
        ctx = self.contexts.get(rnti)
        if ctx is not None:
            ctx.connected = True

    def on_released(self, rnti: int, now: int) -> None:
        ctx = self.contexts.pop(rnti, None)
        if ctx is not None:
            self.by_enb_ue_id.pop(ctx.enb_ue_id, None)
        self.released.add(rnti)
