"""Two-party frame channels between the PNF (PHY) and VNF (stack) sides.

``inprocess`` endpoints share a pair of deques and are FIFO and lossless.
``loopback`` endpoints exchange one frame per UDP datagram on 127.0.0.1;
the PNF side binds ``port`` and the VNF side ``port + 1``.  A ``drop``
predicate can be installed on a sending endpoint to inject losses.
"""

from __future__ import annotations

import socket
from collections import deque
from typing import Callable

LOCALHOST = "127.0.0.1"
MAX_DATAGRAM = 65535 + 8


class LinkError(OSError):
    pass


class InProcessEndpoint:
    def __init__(self, inbox: deque, outbox: deque):
        self._inbox = inbox
        self._outbox = outbox
        self.drop: Callable[[int], bool] | None = None
        self.sent = 0

    def send(self, frame: bytes) -> None:
        self.sent += 1
        if self.drop is not None and self.drop(self.sent):
            return
        self._outbox.append(bytes(frame))

    def recv(self, timeout: float | None = 0.0) -> bytes | None:
        # nothing can arrive while this thread waits, so the timeout is moot
        return self._inbox.popleft() if self._inbox else None

    def pending(self) -> int:
        return len(self._inbox)

    def close(self) -> None:
        pass


class LoopbackEndpoint:
    def __init__(self, local_port: int, remote_port: int, host: str = LOCALHOST):
        self.remote = (host, remote_port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        except OSError:
            pass
        try:
            self.sock.bind((host, local_port))
        except OSError as exc:
            self.sock.close()
            raise LinkError(f"cannot bind {host}:{local_port}: {exc}") from exc
        self.local_port = self.sock.getsockname()[1]
        self.drop: Callable[[int], bool] | None = None
        self.sent = 0

    def send(self, frame: bytes) -> None:
        self.sent += 1
        if self.drop is not None and self.drop(self.sent):
            return
        try:
            self.sock.sendto(frame, self.remote)
        except ConnectionRefusedError:
            pass  # peer not bound (yet); a lost datagram, as on a real link

    def recv(self, timeout: float | None = 0.0) -> bytes | None:
        """Return the next datagram, or ``None`` once ``timeout`` seconds pass.

        ``timeout=None`` blocks indefinitely.
        """
        self.sock.settimeout(timeout)
        try:
            data, _ = self.sock.recvfrom(MAX_DATAGRAM)
        except (socket.timeout, BlockingIOError, ConnectionRefusedError):
            return None
        return data

    def fileno(self) -> int:
        return self.sock.fileno()

    def close(self) -> None:
        self.sock.close()


def open_link(mode: str = "inprocess", port: int | None = None):
    """Return ``(pnf_endpoint, vnf_endpoint)`` for the requested mode."""
    if mode == "inprocess":
        a, b = deque(), deque()
        return InProcessEndpoint(a, b), InProcessEndpoint(b, a)
    if mode == "loopback":
        if port is None:
            raise ValueError("loopback mode needs a port")
        pnf = LoopbackEndpoint(port, port + 1)
        try:
            vnf = LoopbackEndpoint(port + 1, port)
        except LinkError:
            pnf.close()
            raise
        return pnf, vnf
    raise ValueError(f"unknown link mode {mode!r}")


def drop_frames(*indices: int) -> Callable[[int], bool]:
    """Drop predicate removing the given 1-based frame numbers."""
    wanted = set(indices)
    return lambda n: n in wanted
