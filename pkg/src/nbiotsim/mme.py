"""Control-plane-only core: S1 setup, EMM attach dialogue and NAS data delivery.

There is no user plane.  Uplink user data arrives inside NAS
(``EsmDataTransport``) and is appended to an in-memory UDP sink.
"""

from __future__ import annotations

import ipaddress
import random
from dataclasses import dataclass

from .nas import (AttachAccept, AttachComplete, AttachRequest, AuthenticationReject, AuthenticationRequest,
                  AuthenticationResponse, EsmDataTransport, IdentityRequest, IdentityResponse, SecurityModeCommand,
                  SecurityModeComplete, nas_name)
from .s1ap import (DownlinkNASTransport, InitialUEMessage, S1apDecodeError, S1SetupRequest, S1SetupResponse,
                   UplinkNASTransport, decode_s1ap, encode_s1ap, message_type)
from .trace import Tag, Tracer

KEY_LEN = 16


class PoolExhausted(RuntimeError):
    pass


def auth_res(k: bytes, rand: bytes) -> bytes:
    """Toy authentication response: the first 8 bytes of ``k XOR rand``."""
    if len(k) != KEY_LEN or len(rand) != KEY_LEN:
        raise ValueError("k and rand must be 16 bytes")
    return bytes(a ^ b for a, b in zip(k[:8], rand[:8]))


class IpPool:
    """Sequential IPv4 allocation from ``first`` up to the last host of ``network``."""

    def __init__(self, network: str = "10.0.0.0/24", first: str = "10.0.0.2"):
        self.network = ipaddress.IPv4Network(network)
        self._next = ipaddress.IPv4Address(first)
        self._last = self.network.broadcast_address - 1
        if self._next not in self.network:
            raise ValueError("first address outside the pool network")
        self.issued: list[str] = []

    def allocate(self) -> str:
        if self._next > self._last:
            raise PoolExhausted(f"address pool {self.network} exhausted after {len(self.issued)} allocations")
        ip = str(self._next)
        self._next += 1
        self.issued.append(ip)
        return ip


@dataclass(frozen=True)
class UdpSinkRecord:
    dest_ip: str
    dest_port: int
    payload: bytes
    abs_sf: int

    def format(self) -> str:
        return f"{self.abs_sf} {self.dest_ip}:{self.dest_port} {self.payload.hex()}"


def format_sink(records) -> str:
    return "".join(r.format() + "\n" for r in records)


@dataclass
class MmeUeCtx:
    mme_ue_id: int
    enb_ue_id: int
    imsi: str
    state: str = "identity"  # identity | auth | security | accept | attached | rejected
    rand: bytes = b""
    ip: str | None = None
    auth_ok: int = 0


class Mme:
    def __init__(self, subscribers: dict[str, bytes], tracer: Tracer, *, identity_request: bool = True,
                 responsive: bool = True, name: str = "nbiotsim-mme", seed: int = 0,
                 pool: IpPool | None = None):
        for imsi, k in subscribers.items():
            if len(k) != KEY_LEN:
                raise ValueError(f"subscriber {imsi}: K must be 16 bytes")
        self.subscribers = dict(subscribers)
        self.tracer = tracer
        self.identity_request = identity_request
        self.responsive = responsive
        self.name = name
        self.rng = random.Random(f"{seed}:mme")
        self.pool = pool or IpPool()
        self.s1_ready = False
        self.ues: dict[int, MmeUeCtx] = {}  # keyed by enb_ue_id
        self.sink: list[UdpSinkRecord] = []
        self._next_mme_ue_id = 1

    def pump(self, endpoint, now: int) -> None:
        """Drain ``endpoint``, answering every decoded S1AP message on it."""
        while True:
            frame = endpoint.recv(0.0)
            if frame is None:
                return
            try:
                msg = decode_s1ap(frame)
            except S1apDecodeError as exc:
                self.tracer.emit(now, Tag.WARN, "mme", 0, f"s1ap_decode_error {exc}")
                continue
            for reply in self.handle_s1(msg, now):
                entity = getattr(reply, "mme_ue_id", 0)
                self.tracer.emit(now, Tag.S1AP, "mme", entity, f"{message_type(reply)} dir=mme->enb")
                endpoint.send(encode_s1ap(reply))

    def handle_s1(self, msg, now: int) -> list:
        if isinstance(msg, S1SetupRequest):
            self.s1_ready = True
            return [S1SetupResponse(self.name)]
        if not self.s1_ready:
            self.tracer.emit(now, Tag.WARN, "mme", 0, f"protocol_error {type(msg).__name__} before S1 setup dropped")
            return []
        if not self.responsive:
            return []
        if isinstance(msg, InitialUEMessage):
            return self._initial(msg, now)
        if isinstance(msg, UplinkNASTransport):
            ctx = self.ues.get(msg.enb_ue_id)
            if ctx is None or ctx.mme_ue_id != msg.mme_ue_id:
                self.tracer.emit(now, Tag.WARN, "mme", msg.mme_ue_id, "ul_nas_unknown_association dropped")
                return []
            return self._uplink(ctx, msg.nas, now)
        self.tracer.emit(now, Tag.WARN, "mme", 0, f"unexpected {type(msg).__name__}")
        return []

    def _dl(self, ctx: MmeUeCtx, nas) -> DownlinkNASTransport:
        return DownlinkNASTransport(ctx.mme_ue_id, ctx.enb_ue_id, nas)

    def _initial(self, msg: InitialUEMessage, now: int) -> list:
        if not isinstance(msg.nas, AttachRequest):
            self.tracer.emit(now, Tag.WARN, "mme", 0, f"initial_ue_without_attach {nas_name(msg.nas)}")
            return []
        ctx = MmeUeCtx(self._next_mme_ue_id, msg.enb_ue_id, msg.nas.imsi)
        self._next_mme_ue_id += 1
        self.ues[msg.enb_ue_id] = ctx
        if self.identity_request:
            return [self._dl(ctx, IdentityRequest())]
        return self._authenticate(ctx)

    def _authenticate(self, ctx: MmeUeCtx) -> list:
        if ctx.imsi not in self.subscribers:
            ctx.state = "rejected"
            return [self._dl(ctx, AuthenticationReject())]
        ctx.rand = bytes(self.rng.getrandbits(8) for _ in range(16))
        ctx.state = "auth"
        return [self._dl(ctx, AuthenticationRequest(ctx.rand))]

    def _uplink(self, ctx: MmeUeCtx, nas, now: int) -> list:
        if isinstance(nas, IdentityResponse) and ctx.state == "identity":
            ctx.imsi = nas.imsi
            return self._authenticate(ctx)
        if isinstance(nas, AuthenticationResponse) and ctx.state == "auth":
            if nas.res != auth_res(self.subscribers[ctx.imsi], ctx.rand):
                ctx.state = "rejected"
                return [self._dl(ctx, AuthenticationReject())]
            ctx.auth_ok += 1
            ctx.state = "security"
            return [self._dl(ctx, SecurityModeCommand())]
        if isinstance(nas, SecurityModeComplete) and ctx.state == "security":
            ctx.ip = self.pool.allocate()
            ctx.state = "accept"
            return [self._dl(ctx, AttachAccept(ctx.ip))]
        if isinstance(nas, AttachComplete) and ctx.state == "accept":
            ctx.state = "attached"
            return []
        if isinstance(nas, EsmDataTransport) and ctx.state == "attached":
            self.sink.append(UdpSinkRecord(nas.dest_ip, nas.dest_port, nas.payload, now))
            return []
        self.tracer.emit(now, Tag.WARN, "mme", ctx.mme_ue_id, f"unexpected_nas {nas_name(nas)} in state {ctx.state}")
        return []
