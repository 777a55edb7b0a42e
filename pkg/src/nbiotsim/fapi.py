"""P7-style message set and binary framing for the PHY / stack split.

Every frame is an 8-byte big-endian header followed by the body::

    msg_type:u16  body_len:u16  sfn:u16  sf:u8  flags:u8

The layout is project-defined; it carries the same information as the
Small Cell Forum data-path messages but is not bit-compatible with them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

HEADER = struct.Struct(">HHHBB")
HEADER_LEN = HEADER.size
MAX_BODY = 0xFFFF


class FapiDecodeError(ValueError):
    pass


class MsgType(IntEnum):
    SUBFRAME_INDICATION = 0x0001
    DL_CONFIG_REQUEST = 0x0080
    UL_CONFIG_REQUEST = 0x0081
    RACH_INDICATION = 0x0085
    RX_INDICATION = 0x0086
    CRC_INDICATION = 0x0087
    HARQ_INDICATION = 0x0088


class DciFormat(IntEnum):
    N0 = 0  # uplink grant
    N1 = 1  # downlink assignment
    N1_RAR = 2  # downlink assignment carrying a random access response


class RntiType(IntEnum):
    RA = 0
    TC = 1
    C = 2


def _check_sfn_sf(sfn: int, sf: int) -> None:
    if not 0 <= sfn < 1024:
        raise ValueError(f"sfn out of range: {sfn}")
    if not 0 <= sf < 10:
        raise ValueError(f"sf out of range: {sf}")


def _check_u(value: int, bits: int, name: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < (1 << bits):
        raise ValueError(f"{name} must fit in {bits} unsigned bits: {value!r}")


@dataclass(frozen=True)
class Dci:
    rnti: int
    fmt: DciFormat
    rnti_type: RntiType
    reps: int = 1  # NPDCCH repetitions, i.e. subframes occupied
    delay: int = 0  # subframes from NPDCCH start to the scheduled data start
    data_reps: int = 1
    subcarrier: int = 0  # uplink grants only
    duration: int = 0  # subframes of the scheduled data transmission
    retx: bool = False
    ce_level: int = 0
    tbs: int = 0  # transport block size in bytes (uplink grants)

    _S = struct.Struct(">HBBBHBBHBBH")

    def __post_init__(self):
        _check_u(self.rnti, 16, "rnti")
        object.__setattr__(self, "fmt", DciFormat(self.fmt))
        object.__setattr__(self, "rnti_type", RntiType(self.rnti_type))
        _check_u(self.reps, 8, "reps")
        _check_u(self.delay, 16, "delay")
        _check_u(self.data_reps, 8, "data_reps")
        _check_u(self.subcarrier, 8, "subcarrier")
        _check_u(self.duration, 16, "duration")
        _check_u(self.ce_level, 2, "ce_level")
        if self.ce_level > 2:
            raise ValueError("ce_level must be 0..2")
        _check_u(self.tbs, 16, "tbs")

    def pack(self) -> bytes:
        return self._S.pack(self.rnti, self.fmt, self.rnti_type, self.reps, self.delay, self.data_reps,
                            self.subcarrier, self.duration, int(self.retx), self.ce_level, self.tbs)

    @classmethod
    def unpack_from(cls, buf: bytes, off: int):
        if off + cls._S.size > len(buf):
            raise FapiDecodeError("truncated DCI")
        f = cls._S.unpack_from(buf, off)
        if f[8] > 1:
            raise FapiDecodeError("bad DCI flags")
        try:
            dci = cls(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], bool(f[8]), f[9], f[10])
        except ValueError as exc:
            raise FapiDecodeError(f"invalid DCI: {exc}") from None
        return dci, off + cls._S.size


@dataclass(frozen=True)
class DlPdu:
    rnti: int
    payload: bytes
    reps: int = 1
    duration: int = 1
    ce_level: int = 0

    _S = struct.Struct(">HBBHH")

    def __post_init__(self):
        _check_u(self.rnti, 16, "rnti")
        _check_u(self.reps, 8, "reps")
        _check_u(self.duration, 16, "duration")
        if self.ce_level not in (0, 1, 2):
            raise ValueError("ce_level must be 0..2")
        object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) > 0xFFFF:
            raise ValueError("payload too long")

    def pack(self) -> bytes:
        return self._S.pack(self.rnti, self.ce_level, self.reps, self.duration, len(self.payload)) + self.payload

    @classmethod
    def unpack_from(cls, buf: bytes, off: int):
        if off + cls._S.size > len(buf):
            raise FapiDecodeError("truncated DL PDU")
        rnti, ce, reps, duration, n = cls._S.unpack_from(buf, off)
        off += cls._S.size
        if off + n > len(buf):
            raise FapiDecodeError("truncated DL PDU payload")
        try:
            pdu = cls(rnti, buf[off:off + n], reps, duration, ce)
        except ValueError as exc:
            raise FapiDecodeError(f"invalid DL PDU: {exc}") from None
        return pdu, off + n


@dataclass(frozen=True)
class UlGrant:
    rnti: int
    subcarrier: int
    duration: int
    reps: int = 1
    ce_level: int = 0

    _S = struct.Struct(">HBHBB")

    def __post_init__(self):
        _check_u(self.rnti, 16, "rnti")
        _check_u(self.subcarrier, 8, "subcarrier")
        _check_u(self.duration, 16, "duration")
        _check_u(self.reps, 8, "reps")
        if self.ce_level not in (0, 1, 2):
            raise ValueError("ce_level must be 0..2")

    def pack(self) -> bytes:
        return self._S.pack(self.rnti, self.subcarrier, self.duration, self.reps, self.ce_level)

    @classmethod
    def unpack_from(cls, buf: bytes, off: int):
        if off + cls._S.size > len(buf):
            raise FapiDecodeError("truncated UL grant")
        f = cls._S.unpack_from(buf, off)
        try:
            grant = cls(*f)
        except ValueError as exc:
            raise FapiDecodeError(f"invalid UL grant: {exc}") from None
        return grant, off + cls._S.size


# ---------------------------------------------------------------------------
# messages


@dataclass(frozen=True)
class SubframeIndication:
    sfn: int
    sf: int

    def __post_init__(self):
        _check_sfn_sf(self.sfn, self.sf)


@dataclass(frozen=True)
class DlConfigRequest:
    sfn: int
    sf: int
    dci_list: tuple = ()
    pdu_list: tuple = ()

    def __post_init__(self):
        _check_sfn_sf(self.sfn, self.sf)
        object.__setattr__(self, "dci_list", tuple(self.dci_list))
        object.__setattr__(self, "pdu_list", tuple(self.pdu_list))
        if len(self.dci_list) > 255 or len(self.pdu_list) > 255:
            raise ValueError("at most 255 DCIs and 255 PDUs per request")


@dataclass(frozen=True)
class UlConfigRequest:
    sfn: int
    sf: int
    grants: tuple = ()

    def __post_init__(self):
        _check_sfn_sf(self.sfn, self.sf)
        object.__setattr__(self, "grants", tuple(self.grants))
        if len(self.grants) > 255:
            raise ValueError("at most 255 grants per request")


@dataclass(frozen=True)
class RachIndication:
    """A detected preamble; (sfn, sf) is the start of the NPRACH occasion."""

    sfn: int
    sf: int
    subcarrier: int
    ce_level_hint: int

    def __post_init__(self):
        _check_sfn_sf(self.sfn, self.sf)
        if not 0 <= self.subcarrier < 48:
            raise ValueError("subcarrier must be 0..47")
        if self.ce_level_hint not in (0, 1, 2):
            raise ValueError("ce_level_hint must be 0..2")


@dataclass(frozen=True)
class RxIndication:
    rnti: int
    payload: bytes
    sfn: int = 0
    sf: int = 0

    def __post_init__(self):
        _check_u(self.rnti, 16, "rnti")
        _check_sfn_sf(self.sfn, self.sf)
        object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) > MAX_BODY - 2:
            raise ValueError("payload does not fit in one frame")


@dataclass(frozen=True)
class CrcIndication:
    rnti: int
    passed: bool
    sfn: int = 0
    sf: int = 0

    def __post_init__(self):
        _check_u(self.rnti, 16, "rnti")
        _check_sfn_sf(self.sfn, self.sf)
        object.__setattr__(self, "passed", bool(self.passed))


@dataclass(frozen=True)
class HarqIndication:
    """Downlink HARQ feedback (ACK/NACK) reported by a UE on NPUSCH format 2."""

    rnti: int
    ack: bool
    sfn: int = 0
    sf: int = 0

    def __post_init__(self):
        _check_u(self.rnti, 16, "rnti")
        _check_sfn_sf(self.sfn, self.sf)
        object.__setattr__(self, "ack", bool(self.ack))


FapiMessage = (SubframeIndication | DlConfigRequest | UlConfigRequest | RachIndication
               | RxIndication | CrcIndication | HarqIndication)


def encode(msg) -> bytes:
    if isinstance(msg, SubframeIndication):
        mtype, body = MsgType.SUBFRAME_INDICATION, b""
    elif isinstance(msg, DlConfigRequest):
        mtype = MsgType.DL_CONFIG_REQUEST
        body = (bytes([len(msg.dci_list)]) + b"".join(d.pack() for d in msg.dci_list)
                + bytes([len(msg.pdu_list)]) + b"".join(p.pack() for p in msg.pdu_list))
    elif isinstance(msg, UlConfigRequest):
        mtype = MsgType.UL_CONFIG_REQUEST
        body = bytes([len(msg.grants)]) + b"".join(g.pack() for g in msg.grants)
    elif isinstance(msg, RachIndication):
        mtype, body = MsgType.RACH_INDICATION, struct.pack(">BB", msg.subcarrier, msg.ce_level_hint)
    elif isinstance(msg, RxIndication):
        mtype, body = MsgType.RX_INDICATION, struct.pack(">H", msg.rnti) + msg.payload
    elif isinstance(msg, CrcIndication):
        mtype, body = MsgType.CRC_INDICATION, struct.pack(">HB", msg.rnti, int(msg.passed))
    elif isinstance(msg, HarqIndication):
        mtype, body = MsgType.HARQ_INDICATION, struct.pack(">HB", msg.rnti, int(msg.ack))
    else:
        raise TypeError(f"not a FAPI message: {msg!r}")
    if len(body) > MAX_BODY:
        raise ValueError("encoded body exceeds 65535 bytes")
    return HEADER.pack(mtype, len(body), msg.sfn, msg.sf, 0) + body


def decode(frame: bytes):
    frame = bytes(frame)
    if len(frame) < HEADER_LEN:
        raise FapiDecodeError(f"truncated frame: {len(frame)} bytes, header needs {HEADER_LEN}")
    mtype, body_len, sfn, sf, flags = HEADER.unpack_from(frame)
    body = frame[HEADER_LEN:]
    if len(body) < body_len:
        raise FapiDecodeError(f"truncated frame: body has {len(body)} of {body_len} bytes")
    if len(body) != body_len:
        raise FapiDecodeError(f"length mismatch: header says {body_len}, frame carries {len(body)}")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise FapiDecodeError(f"unknown message type 0x{mtype:04x}") from None
    if flags:
        raise FapiDecodeError(f"unsupported header flags 0x{flags:02x}")
    if not (0 <= sfn < 1024 and 0 <= sf < 10):
        raise FapiDecodeError(f"sfn/sf out of range: {sfn}/{sf}")
    return _DECODERS[mtype](body, sfn, sf)


def _fixed(body: bytes, size: int, what: str) -> None:
    if len(body) != size:
        raise FapiDecodeError(f"{what}: body must be {size} bytes, got {len(body)}")


def _dec_subframe(body, sfn, sf):
    _fixed(body, 0, "SubframeIndication")
    return SubframeIndication(sfn, sf)


def _dec_dl(body, sfn, sf):
    if not body:
        raise FapiDecodeError("DlConfigRequest: missing DCI count")
    off = 1
    dcis = []
    for _ in range(body[0]):
        dci, off = Dci.unpack_from(body, off)
        dcis.append(dci)
    if off >= len(body):
        raise FapiDecodeError("DlConfigRequest: missing PDU count")
    n_pdu = body[off]
    off += 1
    pdus = []
    for _ in range(n_pdu):
        pdu, off = DlPdu.unpack_from(body, off)
        pdus.append(pdu)
    if off != len(body):
        raise FapiDecodeError("DlConfigRequest: trailing bytes")
    return DlConfigRequest(sfn, sf, tuple(dcis), tuple(pdus))


def _dec_ul(body, sfn, sf):
    if not body:
        raise FapiDecodeError("UlConfigRequest: missing grant count")
    off = 1
    grants = []
    for _ in range(body[0]):
        grant, off = UlGrant.unpack_from(body, off)
        grants.append(grant)
    if off != len(body):
        raise FapiDecodeError("UlConfigRequest: trailing bytes")
    return UlConfigRequest(sfn, sf, tuple(grants))


def _dec_rach(body, sfn, sf):
    _fixed(body, 2, "RachIndication")
    try:
        return RachIndication(sfn, sf, body[0], body[1])
    except ValueError as exc:
        raise FapiDecodeError(f"RachIndication: {exc}") from None


def _dec_rx(body, sfn, sf):
    if len(body) < 2:
        raise FapiDecodeError("RxIndication: missing rnti")
    return RxIndication(struct.unpack_from(">H", body)[0], body[2:], sfn, sf)


def _dec_flag(cls, name):
    def dec(body, sfn, sf):
        _fixed(body, 3, name)
        rnti, flag = struct.unpack(">HB", body)
        if flag > 1:
            raise FapiDecodeError(f"{name}: flag must be 0 or 1")
        return cls(rnti, bool(flag), sfn, sf)
    return dec


_DECODERS = {
    MsgType.SUBFRAME_INDICATION: _dec_subframe,
    MsgType.DL_CONFIG_REQUEST: _dec_dl,
    MsgType.UL_CONFIG_REQUEST: _dec_ul,
    MsgType.RACH_INDICATION: _dec_rach,
    MsgType.RX_INDICATION: _dec_rx,
    MsgType.CRC_INDICATION: _dec_flag(CrcIndication, "CrcIndication"),
    MsgType.HARQ_INDICATION: _dec_flag(HarqIndication, "HarqIndication"),
}
