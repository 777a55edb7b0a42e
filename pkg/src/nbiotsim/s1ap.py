"""S1AP messages between eNB and MME, framed for the in-process/loopback fabric.

Frame layout: ``type:u8  body_len:u16  body``.  NAS PDUs are nested as
``nas_len:u16 nas``.  Transport is the same datagram fabric used for the
PHY split, not SCTP.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any

from .nas import NasDecodeError, decode_nas, encode_nas, nas_name

_HDR = struct.Struct(">BH")


class S1apDecodeError(ValueError):
    pass


def _check_u32(v: int, name: str) -> None:
    if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < 2**32:
        raise ValueError(f"{name} must be an unsigned 32-bit integer")


def _check_text(s: str, name: str, limit: int = 150) -> None:
    if not isinstance(s, str) or len(s.encode("utf-8")) > limit:
        raise ValueError(f"{name} must be a string of at most {limit} bytes")


@dataclass(frozen=True)
class S1SetupRequest:
    enb_id: int
    plmn: str

    def __post_init__(self):
        _check_u32(self.enb_id, "enb_id")
        if not (isinstance(self.plmn, str) and self.plmn.isascii() and self.plmn.isdigit()
                and len(self.plmn) in (5, 6)):
            raise ValueError("plmn must be 5 or 6 digits")


@dataclass(frozen=True)
class S1SetupResponse:
    mme_name: str

    def __post_init__(self):
        _check_text(self.mme_name, "mme_name")


@dataclass(frozen=True)
class InitialUEMessage:
    enb_ue_id: int
    nas: Any

    def __post_init__(self):
        _check_u32(self.enb_ue_id, "enb_ue_id")
        encode_nas(self.nas)


@dataclass(frozen=True)
class DownlinkNASTransport:
    mme_ue_id: int
    enb_ue_id: int
    nas: Any

    def __post_init__(self):
        _check_u32(self.mme_ue_id, "mme_ue_id")
        _check_u32(self.enb_ue_id, "enb_ue_id")
        encode_nas(self.nas)


@dataclass(frozen=True)
class UplinkNASTransport:
    mme_ue_id: int
    enb_ue_id: int
    nas: Any

    def __post_init__(self):
        _check_u32(self.mme_ue_id, "mme_ue_id")
        _check_u32(self.enb_ue_id, "enb_ue_id")
        encode_nas(self.nas)


S1apMessage = S1SetupRequest | S1SetupResponse | InitialUEMessage | DownlinkNASTransport | UplinkNASTransport

_CODES = {S1SetupRequest: 17, S1SetupResponse: 18, InitialUEMessage: 12,
          DownlinkNASTransport: 11, UplinkNASTransport: 13}
_BY_CODE = {v: k for k, v in _CODES.items()}


def message_type(msg) -> str:
    """Type name used in traces, with the carried NAS message when present."""
    name = type(msg).__name__
    nas = getattr(msg, "nas", None)
    return f"{name}/{nas_name(nas)}" if nas is not None else name


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return bytes([len(raw)]) + raw


def _nas(pdu) -> bytes:
    raw = encode_nas(pdu)
    return struct.pack(">H", len(raw)) + raw


def encode_s1ap(msg) -> bytes:
    code = _CODES.get(type(msg))
    if code is None:
        raise TypeError(f"not an S1AP message: {msg!r}")
    if isinstance(msg, S1SetupRequest):
        body = struct.pack(">I", msg.enb_id) + _text(msg.plmn)
    elif isinstance(msg, S1SetupResponse):
        body = _text(msg.mme_name)
    elif isinstance(msg, InitialUEMessage):
        body = struct.pack(">I", msg.enb_ue_id) + _nas(msg.nas)
    else:
        body = struct.pack(">II", msg.mme_ue_id, msg.enb_ue_id) + _nas(msg.nas)
    return _HDR.pack(code, len(body)) + body


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise S1apDecodeError("truncated S1AP body")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def text(self) -> str:
        n = self.take(1)[0]
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise S1apDecodeError("invalid UTF-8 text") from None

    def nas(self):
        n = struct.unpack(">H", self.take(2))[0]
        try:
            return decode_nas(self.take(n))
        except NasDecodeError as exc:
            raise S1apDecodeError(f"NAS: {exc}") from None


def decode_s1ap(frame: bytes):
    frame = bytes(frame)
    if len(frame) < _HDR.size:
        raise S1apDecodeError("truncated S1AP header")
    code, body_len = _HDR.unpack_from(frame)
    body = frame[_HDR.size:]
    if len(body) != body_len:
        raise S1apDecodeError(f"length mismatch: header says {body_len}, frame carries {len(body)}")
    cls = _BY_CODE.get(code)
    if cls is None:
        raise S1apDecodeError(f"unknown S1AP procedure code {code}")
    r = _Reader(body)
    try:
        if cls is S1SetupRequest:
            msg = S1SetupRequest(r.u32(), r.text())
        elif cls is S1SetupResponse:
            msg = S1SetupResponse(r.text())
        elif cls is InitialUEMessage:
            msg = InitialUEMessage(r.u32(), r.nas())
        else:
            mme_id, enb_id = r.u32(), r.u32()
            msg = cls(mme_id, enb_id, r.nas())
    except S1apDecodeError:
        raise
    except ValueError as exc:
        raise S1apDecodeError(str(exc)) from None
    if r.off != len(body):
        raise S1apDecodeError("trailing bytes in S1AP body")
    return msg
