"""Over-the-air PDUs: MAC random access response, MAC PDUs and RRC messages.

These are the bytes that ride inside transport blocks.  Encodings are
compact and project-defined (no ASN.1 PER).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

LCID_CCCH = 0
LCID_DCCH = 1
LCID_PADDING = 0x1F

CR_ID_LEN = 6


class RadioDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class RarPdu:
    rapid: int  # preamble subcarrier the response answers
    timing_advance: int
    temp_crnti: int
    msg3_subcarrier: int
    msg3_delay: int  # subframes from the end of this PDU to the Msg3 start
    msg3_duration: int
    msg3_reps: int

    _S = struct.Struct(">BHHBHHB")

    def encode(self) -> bytes:
        return self._S.pack(self.rapid, self.timing_advance, self.temp_crnti, self.msg3_subcarrier,
                            self.msg3_delay, self.msg3_duration, self.msg3_reps)

    @classmethod
    def decode(cls, data: bytes) -> "RarPdu":
        if len(data) != cls._S.size:
            raise RadioDecodeError("RAR must be %d bytes" % cls._S.size)
        return cls(*cls._S.unpack(data))


@dataclass(frozen=True)
class MacPdu:
    lcid: int
    sdu: bytes = b""
    bsr: int = 0  # uplink buffer status, bytes still queued after this PDU
    cr_id: bytes | None = None  # contention resolution identity (Msg4 only)

    def encode(self) -> bytes:
        flags = 1 if self.cr_id is not None else 0
        head = struct.pack(">BBH", flags, self.lcid, min(self.bsr, 0xFFFF))
        if self.cr_id is not None:
            if len(self.cr_id) != CR_ID_LEN:
                raise ValueError("contention resolution identity must be 6 bytes")
            head += self.cr_id
        return head + self.sdu

    @classmethod
    def decode(cls, data: bytes) -> "MacPdu":
        if len(data) < 4:
            raise RadioDecodeError("truncated MAC header")
        flags, lcid, bsr = struct.unpack_from(">BBH", data)
        if flags > 1:
            raise RadioDecodeError("bad MAC flags")
        off = 4
        cr_id = None
        if flags:
            if len(data) < off + CR_ID_LEN:
                raise RadioDecodeError("truncated contention resolution identity")
            cr_id = data[off:off + CR_ID_LEN]
            off += CR_ID_LEN
        return cls(lcid, data[off:], bsr, cr_id)


# ---------------------------------------------------------------------------
# RRC


@dataclass(frozen=True)
class RRCConnectionRequest:
    ue_identity: bytes  # 40-bit random value
    cause: int = 1  # mo-Signalling
    release: int = 13
    multitone: bool = False


@dataclass(frozen=True)
class RRCConnectionSetup:
    pass


@dataclass(frozen=True)
class RRCConnectionSetupComplete:
    nas: bytes


@dataclass(frozen=True)
class ULInformationTransfer:
    nas: bytes


@dataclass(frozen=True)
class DLInformationTransfer:
    nas: bytes


_RRC_CODES = {RRCConnectionRequest: 0x10, RRCConnectionSetup: 0x11, RRCConnectionSetupComplete: 0x12,
              ULInformationTransfer: 0x13, DLInformationTransfer: 0x14}
_RRC_BY_CODE = {v: k for k, v in _RRC_CODES.items()}


def encode_rrc(msg) -> bytes:
    code = _RRC_CODES[type(msg)]
    if isinstance(msg, RRCConnectionRequest):
        if len(msg.ue_identity) != 5:
            raise ValueError("ue_identity must be 5 bytes")
        body = msg.ue_identity + bytes([msg.cause, msg.release, int(msg.multitone)])
    elif isinstance(msg, RRCConnectionSetup):
        body = b""
    else:
        body = msg.nas
    return bytes([code]) + body


def decode_rrc(data: bytes):
    if not data:
        raise RadioDecodeError("empty RRC message")
    cls = _RRC_BY_CODE.get(data[0])
    if cls is None:
        raise RadioDecodeError(f"unknown RRC message 0x{data[0]:02x}")
    body = bytes(data[1:])
    if cls is RRCConnectionRequest:
        if len(body) != 8:
            raise RadioDecodeError("RRCConnectionRequest must carry 8 bytes")
        return RRCConnectionRequest(body[:5], body[5], body[6], bool(body[7]))
    if cls is RRCConnectionSetup:
        if body:
            raise RadioDecodeError("RRCConnectionSetup carries no body")
        return RRCConnectionSetup()
    if not body:
        raise RadioDecodeError(f"{cls.__name__} without NAS")
    return cls(body)


def rrc_name(msg) -> str:
    return type(msg).__name__
