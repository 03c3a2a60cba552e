"""Modeled execution environment: UDP sockets, a libev-like event loop and a null cipher."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, Optional, Sequence, Tuple

from .explore.context import PathContext, PayloadByte, Sym
from .explore.records import Fault, FaultKind, FaultSignature
from .probes import define_probe

MAX_DATAGRAM = 1200
TAG_LEN = 4
FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193

SocketAddr = Tuple[str, int]

P_DISPATCH = define_probe("evloop.dispatch")
P_VOID = define_probe("net.send_into_void")


class UsageError(ValueError):
    """Caller violated an operation's precondition."""


class IntegrityError(Exception):
    """Integrity tag did not match; the receiver discards the packet."""


@dataclass(frozen=True)
class Datagram:
    src: SocketAddr
    dst: SocketAddr
    payload: Tuple[PayloadByte, ...]
    transmit_index: int = -1
    # offset where the sealed region (body plus tag) starts; 0 when unknown
    sealed_at: int = 0

    def __post_init__(self):
        if len(self.payload) > MAX_DATAGRAM:
            raise UsageError(f"datagram of {len(self.payload)} bytes exceeds {MAX_DATAGRAM}")

    @property
    def is_symbolic(self) -> bool:
        return any(isinstance(b, Sym) for b in self.payload)


@dataclass
class Socket:
    bound_addr: SocketAddr
    queue: Deque[Datagram] = field(default_factory=deque)


@dataclass
class SocketTable:
    sockets: Dict[int, Socket] = field(default_factory=dict)
    next_transmit: int = 0

    def bind(self, sock: int, addr: SocketAddr) -> None:
        self.sockets[sock] = Socket(addr)

    def lookup(self, addr: SocketAddr) -> Optional[Socket]:
        for s in self.sockets.values():
            if s.bound_addr == addr:
                return s
        return None

    def in_flight(self) -> int:
        return sum(len(s.queue) for s in self.sockets.values())


def socket_send(table: SocketTable, sock: int, dg: Datagram) -> Datagram:
    """Stamp ``dg`` with the next transmit index; the caller hands it to the channel."""
    if sock not in table.sockets:
        raise UsageError(f"socket {sock} is not bound")
    stamped = replace(dg, src=table.sockets[sock].bound_addr, transmit_index=table.next_transmit)
    table.next_transmit += 1
    return stamped


def socket_recv(table: SocketTable, sock: int) -> Optional[Datagram]:
    """Pop the queue head; None plays the role of EWOULDBLOCK."""
    if sock not in table.sockets:
        raise UsageError(f"socket {sock} is not bound")
    q = table.sockets[sock].queue
    return q.popleft() if q else None


def deliver(table: SocketTable, dg: Datagram, ctx: Optional[PathContext] = None) -> bool:
    s = table.lookup(dg.dst)
    if s is None:
        if ctx is not None:
            ctx.hit(P_VOID)
        return False
    s.queue.append(dg)
    return True


class WatcherState(str, enum.Enum):
    ACTIVE = "Active"
    STOPPED = "Stopped"
    RELEASED = "Released"


@dataclass
class Watcher:
    owner: str
    callback: str
    state: WatcherState = WatcherState.ACTIVE
    released_by: Optional[str] = None


@dataclass
class EventLoop:
    watchers: Dict[int, Watcher] = field(default_factory=dict)

    def register(self, owner: str, callback: str) -> int:
        wid = len(self.watchers)
        self.watchers[wid] = Watcher(owner, callback)
        return wid

    def _get(self, wid: int) -> Watcher:
        if wid not in self.watchers:
            raise UsageError(f"unknown watcher {wid}")
        return self.watchers[wid]

    def start(self, wid: int) -> None:
        w = self._get(wid)
        if w.state is WatcherState.RELEASED:
            raise UsageError(f"watcher {wid} was released")
        w.state = WatcherState.ACTIVE

    def stop(self, wid: int) -> None:
        w = self._get(wid)
        if w.state is WatcherState.ACTIVE:
            w.state = WatcherState.STOPPED

    def release(self, wid: int, defect: Optional[str] = None) -> None:
        """Free the watcher's memory.  Releasing without stopping first leaves it registered."""
        w = self._get(wid)
        w.state = WatcherState.RELEASED
        w.released_by = defect

    def registered(self, owner: str):
        """Watcher ids the loop would still poll for ``owner`` (everything not stopped)."""
        return [wid for wid, w in self.watchers.items()
                if w.owner == owner and w.state is not WatcherState.STOPPED]


def watcher_dispatch(loop: EventLoop, wid: int, ctx: Optional[PathContext] = None) -> Optional[str]:
    """Callback tag to invoke, None for a stopped watcher; a released one faults."""
    w = loop._get(wid)
    if ctx is not None:
        ctx.hit(P_DISPATCH)
    if w.state is WatcherState.RELEASED:
        raise Fault(FaultSignature(FaultKind.LIFECYCLE_FAULT, w.owner, P_DISPATCH, w.released_by))
    if w.state is WatcherState.STOPPED:
        return None
    return w.callback


def fnv1a32(data: Sequence[int]) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def _concrete(payload: Sequence[PayloadByte], ctx: Optional[PathContext]) -> Tuple[int, ...]:
    if ctx is None:
        if any(isinstance(b, Sym) for b in payload):
            raise UsageError("symbolic bytes need a path context to be hashed")
        return tuple(payload)
    return tuple(ctx.concrete(b) for b in payload)


def seal(payload: Sequence[PayloadByte], ctx: Optional[PathContext] = None) -> Tuple[int, ...]:
    """Null encryption plus a 4-byte big-endian FNV-1a tag.

    The hash cannot be inverted symbolically, so symbolic bytes are concretized first.
    """
    data = _concrete(payload, ctx)
    return data + tuple(fnv1a32(data).to_bytes(4, "big"))


def reseal(payload: Sequence[PayloadByte], offset: int,
           ctx: Optional[PathContext] = None) -> Tuple[PayloadByte, ...]:
    """Recompute the tag of ``payload[offset:]`` as if its body had been sealed as-is."""
    if len(payload) - offset < TAG_LEN:
        raise UsageError("sealed region shorter than the tag")
    return tuple(payload[:offset]) + seal(payload[offset:-TAG_LEN], ctx)


def open_sealed(sealed: Sequence[PayloadByte], ctx: Optional[PathContext] = None) -> Tuple[int, ...]:
    if len(sealed) < TAG_LEN:
        raise IntegrityError("shorter than the integrity tag")
    data = _concrete(sealed, ctx)
    body, tag = data[:-TAG_LEN], data[-TAG_LEN:]
    if fnv1a32(body).to_bytes(4, "big") != bytes(tag):
        raise IntegrityError("integrity tag mismatch")
    return body
