"""Pieces shared by both endpoint implementations: belief state, streams, loss recovery."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Protocol, Tuple

from ..explore.context import PathContext, PayloadByte
from ..explore.records import Fault, FaultKind, FaultSignature
from ..netmodel import Datagram, EventLoop
from ..probes import define_probe
from .wire import Ack, Close, Frame, Handshake, Packet, PacketType, Stream, encode_packet

CLIENT, SERVER = "Client", "Server"
S1, S2, S3 = "S1", "S2", "S3"
SCENARIOS = (S1, S2, S3)

REQUEST = tuple(b"GET /index.html")
RESPONSE = tuple(b"A")
CLIENT_CID = (0xC1, 0x1E, 0x47, 0x01)
REQUEST_STREAM = 0

CLOSE_OK = 0x00
CLOSE_IDLE_TIMEOUT = 0x01

RETRANSMIT_EVERY = 2
ABORT_TICKS = 6
# a server with nothing outstanding only waits on its peer; it gives up later
PASSIVE_ABORT_TICKS = 2 * ABORT_TICKS

P_INVALID_TRANSITION = define_probe("endpoint.invalid_transition")
P_RETRANSMIT = define_probe("endpoint.retransmit")
P_TIMEOUT = define_probe("endpoint.timeout")


class Phase(str, enum.Enum):
    IDLE = "Idle"
    CONNECTING = "Connecting"
    ESTABLISHED = "Established"
    CLOSING = "Closing"
    CLOSED = "Closed"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (Phase.CLOSED, Phase.FAILED)


class StreamState(str, enum.Enum):
    OPEN = "Open"
    HALF_CLOSED_LOCAL = "HalfClosedLocal"
    HALF_CLOSED_REMOTE = "HalfClosedRemote"
    CLOSED = "Closed"
    RESET = "Reset"


class Progress(str, enum.Enum):
    PROGRESSED = "Progressed"
    BLOCKED = "Blocked"
    FINISHED = "Finished"


@dataclass(frozen=True)
class StreamBelief:
    state: StreamState
    bytes_sent: int
    bytes_received: int
    fin_sent: bool
    fin_received: bool


@dataclass(frozen=True)
class BeliefState:
    phase: Phase
    version_in_use: Tuple[PayloadByte, ...]
    streams: Tuple[Tuple[int, StreamBelief], ...]
    app_bytes_sent_total: int
    app_bytes_received_total: int
    close_code: Optional[int]
    timeout_flag: bool

    def stream(self, sid: int) -> Optional[StreamBelief]:
        return dict(self.streams).get(sid)


@dataclass
class StreamRecord:
    bytes_sent: int = 0
    bytes_received: int = 0
    received: List[int] = field(default_factory=list)
    fin_sent: bool = False
    fin_acked: bool = False
    fin_received: bool = False
    reset: bool = False

    @property
    def state(self) -> StreamState:
        if self.reset:
            return StreamState.RESET
        local_done = self.fin_sent and self.fin_acked
        if local_done and self.fin_received:
            return StreamState.CLOSED
        if self.fin_received:
            return StreamState.HALF_CLOSED_REMOTE
        if self.fin_sent:
            return StreamState.HALF_CLOSED_LOCAL
        return StreamState.OPEN


class EndpointIO(Protocol):
    ctx: PathContext
    loop: EventLoop

    def send(self, payload: Tuple[PayloadByte, ...]) -> None: ...

    def recv(self) -> Optional[Datagram]: ...

    def readable(self) -> bool: ...


class EndpointBase:
    """Connection state every implementation keeps; no class-level mutable state."""

    impl = "base"
    applicable_defects: Dict[str, FrozenSet[str]] = {}

    def __init__(self, role: str, scenario: str, defects=(), proposed_version=None):
        if role not in (CLIENT, SERVER):
            raise ValueError(f"unknown role {role!r}")
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {scenario!r}")
        allowed = self.applicable_defects.get(role, frozenset())
        bad = sorted(set(defects) - allowed)
        if bad:
            raise ValueError(f"defect(s) {', '.join(bad)} not applicable to {self.impl} {role.lower()}")
        self.role = role
        self.scenario = scenario
        self.defects = frozenset(defects)
        self.phase = Phase.IDLE
        self.version: Tuple[PayloadByte, ...] = tuple(proposed_version) if proposed_version else ()
        self.cid: Tuple[PayloadByte, ...] = CLIENT_CID if role == CLIENT else ()
        self.next_pn = 0
        self.unacked: Dict[int, Tuple[PacketType, Tuple[Frame, ...]]] = {}
        self.ack_queue: List[PayloadByte] = []
        self.out_queue: List[Tuple[PacketType, Tuple[Frame, ...]]] = []
        self.idle_ticks = 0
        self.streams: Dict[int, StreamRecord] = {}
        self.app_sent = 0
        self.app_received = 0
        self.close_code: Optional[int] = None
        self.timeout_flag = False

    # -- belief --------------------------------------------------------------
    def belief_state(self) -> BeliefState:
        streams = tuple(
            (sid, StreamBelief(s.state, s.bytes_sent, s.bytes_received, s.fin_sent, s.fin_received))
            for sid, s in sorted(self.streams.items()))
        return BeliefState(self.phase, self.version, streams, self.app_sent, self.app_received,
                           self.close_code, self.timeout_flag)

    @property
    def terminal(self) -> bool:
        return self.phase.terminal

    def has(self, defect: str) -> bool:
        return defect in self.defects

    def set_phase(self, phase: Phase) -> None:
        if self.phase.terminal and phase is not self.phase:
            raise Fault(FaultSignature(FaultKind.INVALID_TRANSITION, self.role, P_INVALID_TRANSITION))
        self.phase = phase

    # -- packet assembly -------------------------------------------------------
    def queue(self, ptype: PacketType, *frames: Frame) -> None:
        self.out_queue.append((ptype, tuple(frames)))

    def ack(self, pn: PayloadByte) -> None:
        self.ack_queue.append(pn)

    def ack_only_type(self) -> PacketType:
        if self.phase in (Phase.ESTABLISHED, Phase.CLOSING, Phase.CLOSED, Phase.FAILED):
            return PacketType.SHORT
        return PacketType.HANDSHAKE

    def build_packets(self, ctx: PathContext) -> List[Tuple[PayloadByte, ...]]:
        """Drain queued frames (plus pending ACKs) into encoded datagram payloads."""
        if not self.out_queue and self.ack_queue:
            self.out_queue.append((self.ack_only_type(), ()))
        out = []
        for ptype, frames in self.out_queue:
            acks = tuple(Ack(pn) for pn in self.ack_queue)
            self.ack_queue = []
            pkt = Packet(ptype, self.cid, self.next_pn,
                         self.version if ptype is not PacketType.SHORT else None,
                         acks + frames)
            if pkt.ack_eliciting:
                self.unacked[self.next_pn] = (ptype, frames)
            self.next_pn = (self.next_pn + 1) & 0xFF
            out.append(encode_packet(pkt, ctx))
        self.out_queue = []
        return out

    def discard_unacked(self, *ptypes: PacketType) -> None:
        for pn in [pn for pn, (t, _) in self.unacked.items() if t in ptypes]:
            del self.unacked[pn]

    def on_ack(self, pn: int) -> None:
        entry = self.unacked.pop(pn, None)
        if entry is None:
            return
        for f in entry[1]:
            if isinstance(f, Stream) and f.fin:
                self.streams[f.stream_id].fin_acked = True

    # -- streams -------------------------------------------------------------
    def send_stream(self, sid: int, data: Tuple[int, ...], fin: bool) -> None:
        s = self.streams.setdefault(sid, StreamRecord())
        self.queue(PacketType.SHORT, Stream(sid, s.bytes_sent, data, fin))
        s.bytes_sent += len(data)
        self.app_sent += len(data)
        s.fin_sent = s.fin_sent or fin

    def receive_stream(self, f: Stream) -> bool:
        """Accept in-order data; returns True when the FIN has just been consumed."""
        s = self.streams.setdefault(f.stream_id, StreamRecord())
        if s.fin_received:
            return False
        end = f.offset + len(f.data)
        if f.offset > s.bytes_received:
            return False
        fresh = f.data[s.bytes_received - f.offset:]
        s.received.extend(fresh)
        s.bytes_received += len(fresh)
        self.app_received += len(fresh)
        if f.fin and end == s.bytes_received:
            s.fin_received = True
            return True
        return False

    # -- timers ----------------------------------------------------------------
    def abort_limit(self) -> int:
        if self.role == SERVER and not self.unacked and self.phase is Phase.ESTABLISHED:
            return PASSIVE_ABORT_TICKS
        return ABORT_TICKS

    def on_timer(self, ctx: PathContext) -> Progress:
        """One idle tick: retransmit on every second tick, give up at the abort limit."""
        self.idle_ticks += 1
        if self.idle_ticks >= self.abort_limit():
            ctx.hit(P_TIMEOUT)
            had_connection = self.phase is Phase.ESTABLISHED
            self.timeout_flag = True
            self.set_phase(Phase.FAILED)
            if had_connection:
                self.close_code = CLOSE_IDLE_TIMEOUT
                self.queue(PacketType.SHORT, Close(CLOSE_IDLE_TIMEOUT))
            return Progress.FINISHED
        if self.idle_ticks % RETRANSMIT_EVERY == 0 and self.unacked:
            ctx.hit(P_RETRANSMIT)
            pn = next(iter(self.unacked))
            ptype, frames = self.unacked.pop(pn)
            self.queue(ptype, *frames)
            return Progress.PROGRESSED
        return Progress.BLOCKED

    def accepted(self) -> None:
        self.idle_ticks = 0


def guard_fault(role: str, probe: str, defect: Optional[str]) -> Fault:
    return Fault(FaultSignature(FaultKind.GUARD_FAULT, role, probe, defect))
