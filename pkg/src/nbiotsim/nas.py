"""EMM/ESM NAS messages exchanged between UE and MME, with a compact codec.

Encodings are one type octet followed by fixed or length-prefixed fields.
Message type octets follow TS 24.301 where one exists.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass

MAX_USER_PAYLOAD = 1500


class NasDecodeError(ValueError):
    pass


def _check_imsi(imsi: str) -> None:
    if not isinstance(imsi, str) or not imsi.isdigit() or not 5 <= len(imsi) <= 15 or not imsi.isascii():
        raise ValueError(f"IMSI must be 5-15 decimal digits: {imsi!r}")


def _check_ipv4(ip: str) -> None:
    ipaddress.IPv4Address(ip)


@dataclass(frozen=True)
class AttachRequest:
    imsi: str
    epco: bool = False

    def __post_init__(self):
        _check_imsi(self.imsi)


@dataclass(frozen=True)
class IdentityRequest:
    pass


@dataclass(frozen=True)
class IdentityResponse:
    imsi: str

    def __post_init__(self):
        _check_imsi(self.imsi)


@dataclass(frozen=True)
class AuthenticationRequest:
    rand: bytes

    def __post_init__(self):
        object.__setattr__(self, "rand", bytes(self.rand))
        if len(self.rand) != 16:
            raise ValueError("RAND must be 16 bytes")


@dataclass(frozen=True)
class AuthenticationResponse:
    res: bytes

    def __post_init__(self):
        object.__setattr__(self, "res", bytes(self.res))
        if len(self.res) != 8:
            raise ValueError("RES must be 8 bytes")


@dataclass(frozen=True)
class AuthenticationReject:
    pass


@dataclass(frozen=True)
class SecurityModeCommand:
    pass


@dataclass(frozen=True)
class SecurityModeComplete:
    pass


@dataclass(frozen=True)
class AttachAccept:
    ip: str

    def __post_init__(self):
        _check_ipv4(self.ip)


@dataclass(frozen=True)
class AttachComplete:
    pass


@dataclass(frozen=True)
class EsmDataTransport:
    """User data carried inside NAS (control-plane CIoT optimisation)."""

    dest_ip: str
    dest_port: int
    payload: bytes

    def __post_init__(self):
        _check_ipv4(self.dest_ip)
        if not 0 <= self.dest_port < 65536:
            raise ValueError("dest_port out of range")
        object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) > MAX_USER_PAYLOAD:
            raise ValueError(f"payload longer than {MAX_USER_PAYLOAD} bytes")


NasPdu = (AttachRequest | IdentityRequest | IdentityResponse | AuthenticationRequest
          | AuthenticationResponse | AuthenticationReject | SecurityModeCommand
          | SecurityModeComplete | AttachAccept | AttachComplete | EsmDataTransport)

_TYPES = {
    AttachRequest: 0x41,
    AttachAccept: 0x42,
    AttachComplete: 0x43,
    AuthenticationRequest: 0x52,
    AuthenticationResponse: 0x53,
    AuthenticationReject: 0x54,
    IdentityRequest: 0x55,
    IdentityResponse: 0x56,
    SecurityModeCommand: 0x5D,
    SecurityModeComplete: 0x5E,
    EsmDataTransport: 0xEB,
}
_BY_CODE = {code: cls for cls, code in _TYPES.items()}


def nas_name(pdu) -> str:
    return type(pdu).__name__


def _digits(s: str) -> bytes:
    return bytes([len(s)]) + s.encode("ascii")


def encode_nas(pdu) -> bytes:
    code = _TYPES.get(type(pdu))
    if code is None:
        raise TypeError(f"not a NAS PDU: {pdu!r}")
    if isinstance(pdu, AttachRequest):
        body = bytes([int(pdu.epco)]) + _digits(pdu.imsi)
    elif isinstance(pdu, IdentityResponse):
        body = _digits(pdu.imsi)
    elif isinstance(pdu, AuthenticationRequest):
        body = pdu.rand
    elif isinstance(pdu, AuthenticationResponse):
        body = pdu.res
    elif isinstance(pdu, AttachAccept):
        body = ipaddress.IPv4Address(pdu.ip).packed
    elif isinstance(pdu, EsmDataTransport):
        body = (ipaddress.IPv4Address(pdu.dest_ip).packed
                + struct.pack(">HH", pdu.dest_port, len(pdu.payload)) + pdu.payload)
    else:
        body = b""
    return bytes([code]) + body


def _take_digits(body: bytes, off: int) -> tuple[str, int]:
    if off >= len(body):
        raise NasDecodeError("missing IMSI length")
    n = body[off]
    off += 1
    if off + n > len(body):
        raise NasDecodeError("truncated IMSI")
    raw = body[off:off + n]
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise NasDecodeError("IMSI is not ASCII") from None
    return text, off + n


def decode_nas(data: bytes):
    data = bytes(data)
    if not data:
        raise NasDecodeError("empty NAS PDU")
    cls = _BY_CODE.get(data[0])
    if cls is None:
        raise NasDecodeError(f"unknown NAS message type 0x{data[0]:02x}")
    body = data[1:]
    try:
        if cls is AttachRequest:
            if not body or body[0] > 1:
                raise NasDecodeError("AttachRequest: bad flags")
            imsi, off = _take_digits(body, 1)
            end, pdu = off, AttachRequest(imsi, bool(body[0]))
        elif cls is IdentityResponse:
            imsi, end = _take_digits(body, 0)
            pdu = IdentityResponse(imsi)
        elif cls is AuthenticationRequest:
            if len(body) < 16:
                raise NasDecodeError("truncated RAND")
            end, pdu = 16, AuthenticationRequest(body[:16])
        elif cls is AuthenticationResponse:
            if len(body) < 8:
                raise NasDecodeError("truncated RES")
            end, pdu = 8, AuthenticationResponse(body[:8])
        elif cls is AttachAccept:
            if len(body) < 4:
                raise NasDecodeError("truncated address")
            end, pdu = 4, AttachAccept(str(ipaddress.IPv4Address(body[:4])))
        elif cls is EsmDataTransport:
            if len(body) < 8:
                raise NasDecodeError("truncated ESM data header")
            port, n = struct.unpack_from(">HH", body, 4)
            if 8 + n > len(body):
                raise NasDecodeError("truncated ESM payload")
            end = 8 + n
            pdu = EsmDataTransport(str(ipaddress.IPv4Address(body[:4])), port, body[8:end])
        else:
            end, pdu = 0, cls()
    except ValueError as exc:
        if isinstance(exc, NasDecodeError):
            raise
        raise NasDecodeError(str(exc)) from None
    if end != len(body):
        raise NasDecodeError(f"{cls.__name__}: {len(body) - end} trailing bytes")
    return pdu
