"""Pull-style endpoint: the connection only prepares packets, the frontend moves them.

``advance`` makes at most one unit of progress: start the connection, or
consume one datagram and push out whatever the connection prepared in
response.  The connection object itself never performs I/O.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from ..explore.context import PathContext, PayloadByte
from ..netmodel import Datagram
from ..probes import define_probes, define_site
from .base import (CLIENT, CLOSE_OK, REQUEST, REQUEST_STREAM, RESPONSE, S1, S2, S3, SERVER,
                   EndpointBase, EndpointIO, Phase, Progress, StreamRecord, StreamState)
from .wire import (SUPPORTED_VERSION, Ack, Close, Handshake, Packet, PacketType, ParseReject,
                   ResetStream, Stream, bytes_eq, decode_packet, is_reserved_version)

SITE_API_RESERVED = define_site("pico.client.api_reserved_version")
SITE_CID = define_site("pico.cid_match")
SITE_VERSION = define_site("pico.version_match")
SITE_SRV_VERSION = define_site("pico.server.version_supported")
SITE_SRV_RESERVED = define_site("pico.server.version_reserved")

(P_START, P_REJECTED_VERSION, P_RECV, P_PARSE_REJECT, P_VN, P_HS2, P_HS3, P_HS4, P_STREAM,
 P_CLOSE, P_SRV_INITIAL, P_SRV_VN_SENT, P_SRV_IGNORE_RESERVED, P_SRV_SHORT_EARLY,
 P_RESPONSE, P_PEER_CLOSED) = define_probes(
    "pico.start", "pico.api_rejected_version", "pico.recv", "pico.parse_reject",
    "pico.client.vn", "pico.client.hs2", "pico.server.hs3", "pico.client.hs4",
    "pico.stream", "pico.close", "pico.server.initial", "pico.server.vn_sent",
    "pico.server.ignore_reserved", "pico.server.short_before_established",
    "pico.server.response", "pico.peer_closed")


class PicoConnection(EndpointBase):
    impl = "pico"
    applicable_defects = {CLIENT: frozenset({"D3"}), SERVER: frozenset()}

    def __init__(self, role, scenario, defects=(), proposed_version=None):
        super().__init__(role, scenario, defects, proposed_version or SUPPORTED_VERSION)
        self.confirmed = False
        self.vn_retried = False
        self.responded = False

    # -- client API ------------------------------------------------------------
    def connect(self, ctx: PathContext) -> None:
        ctx.hit(P_START)
        if not self.has("D3") and is_reserved_version(ctx, SITE_API_RESERVED, self.version):
            # reserved versions cannot establish anything; fall back to the default
            ctx.hit(P_REJECTED_VERSION)
            self.version = SUPPORTED_VERSION
        self.set_phase(Phase.CONNECTING)
        self.queue(PacketType.INITIAL, Handshake(1))

    # -- input -----------------------------------------------------------------
    def incoming(self, payload: Tuple[PayloadByte, ...], ctx: PathContext) -> None:
        ctx.hit(P_RECV)
        try:
            pkt = decode_packet(payload, ctx)
        except ParseReject:
            ctx.hit(P_PARSE_REJECT)
            return
        if self.role == CLIENT:
            self._client_packet(pkt, ctx)
        else:
            self._server_packet(pkt, ctx)

    def _client_packet(self, pkt: Packet, ctx: PathContext) -> None:
        if not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
            return
        if pkt.ptype is PacketType.VERSION_NEGOTIATION:
            if self.phase is Phase.CONNECTING and not self.vn_retried \
                    and SUPPORTED_VERSION in pkt.versions:
                ctx.hit(P_VN)
                self.accepted()
                self.vn_retried = True
                self.version = SUPPORTED_VERSION
                self.discard_unacked(PacketType.INITIAL)
                self.queue(PacketType.INITIAL, Handshake(1))
            return
        if pkt.ptype is PacketType.SHORT:
            if self.phase not in (Phase.ESTABLISHED, Phase.CLOSING):
                return
            self._confirm()
        elif not bytes_eq(ctx, SITE_VERSION, pkt.version, self.version):
            return
        self.accepted()
        if pkt.ack_eliciting:
            self.ack(pkt.pn)
        for f in pkt.frames:
            if isinstance(f, Ack):
                self.on_ack(f.largest)
            elif isinstance(f, Handshake):
                if f.stage == 2 and self.phase is Phase.CONNECTING:
                    ctx.hit(P_HS2)
                    self.discard_unacked(PacketType.INITIAL)
                    self.set_phase(Phase.ESTABLISHED)
                    self.queue(PacketType.HANDSHAKE, Handshake(3))
                    if self.scenario in (S2, S3):
                        self.send_stream(REQUEST_STREAM, REQUEST, fin=True)
                elif f.stage == 4:
                    ctx.hit(P_HS4)
                    self._confirm()
            elif isinstance(f, Stream):
                ctx.hit(P_STREAM)
                self.receive_stream(f)
            elif isinstance(f, ResetStream):
                self.streams.setdefault(f.stream_id, StreamRecord()).reset = True
            elif isinstance(f, Close):
                self._peer_close(f.code, ctx)
                return
        self._maybe_close(ctx)

    def _confirm(self) -> None:
        if not self.confirmed:
            self.confirmed = True
            self.discard_unacked(PacketType.INITIAL, PacketType.HANDSHAKE)

    def _maybe_close(self, ctx: PathContext) -> None:
        if self.phase is not Phase.ESTABLISHED or not self.confirmed:
            return
        if self.scenario != S1:
            s = self.streams.get(REQUEST_STREAM)
            if s is None or s.state is not StreamState.CLOSED:
                return
        ctx.hit(P_CLOSE)
        self.queue(PacketType.SHORT, Close(CLOSE_OK))
        self.set_phase(Phase.CLOSING)

    def _peer_close(self, code: int, ctx: PathContext) -> None:
        ctx.hit(P_PEER_CLOSED)
        self.close_code = code
        if self.role == SERVER:
            self.queue(PacketType.SHORT, Close(CLOSE_OK))
        self.set_phase(Phase.CLOSED)

    def _server_packet(self, pkt: Packet, ctx: PathContext) -> None:
        if pkt.ptype is PacketType.INITIAL and self.phase is Phase.IDLE:
            self._server_initial(pkt, ctx)
            return
        if self.phase is Phase.IDLE or not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
            return
        if pkt.ptype is PacketType.SHORT:
            if self.phase is not Phase.ESTABLISHED:
                ctx.hit(P_SRV_SHORT_EARLY)
                return
        elif pkt.ptype is PacketType.VERSION_NEGOTIATION:
            return
        elif not bytes_eq(ctx, SITE_VERSION, pkt.version, self.version):
            return
        self.accepted()
        if pkt.ack_eliciting:
            self.ack(pkt.pn)
        for f in pkt.frames:
            if isinstance(f, Ack):
                self.on_ack(f.largest)
            elif isinstance(f, Handshake):
                if f.stage == 3 and self.phase is Phase.CONNECTING:
                    ctx.hit(P_HS3)
                    self.set_phase(Phase.ESTABLISHED)
                    self.queue(PacketType.HANDSHAKE, Handshake(4))
            elif isinstance(f, Stream):
                ctx.hit(P_STREAM)
                if self.receive_stream(f) and not self.responded:
                    self._respond(ctx)
            elif isinstance(f, Close):
                self._peer_close(f.code, ctx)
                return

    def _server_initial(self, pkt: Packet, ctx: PathContext) -> None:
        if Handshake(1) not in pkt.frames:
            return
        ctx.hit(P_SRV_INITIAL)
        if not bytes_eq(ctx, SITE_SRV_VERSION, pkt.version, SUPPORTED_VERSION):
            if is_reserved_version(ctx, SITE_SRV_RESERVED, pkt.version):
                ctx.hit(P_SRV_IGNORE_RESERVED)
                return
            ctx.hit(P_SRV_VN_SENT)
            self.accepted()
            self.cid = pkt.cid
            self.queue(PacketType.VERSION_NEGOTIATION)
            return
        self.accepted()
        self.cid = pkt.cid
        self.version = SUPPORTED_VERSION
        self.ack(pkt.pn)
        self.set_phase(Phase.CONNECTING)
        self.queue(PacketType.HANDSHAKE, Handshake(2))

    def _respond(self, ctx: PathContext) -> None:
        ctx.hit(P_RESPONSE)
        self.responded = True
        if self.scenario == S3:
            self.send_stream(REQUEST_STREAM, RESPONSE, fin=True)
        elif self.scenario == S2:
            self.send_stream(REQUEST_STREAM, (), fin=True)

    # -- output ----------------------------------------------------------------
    def prepare(self, ctx: PathContext) -> List[Tuple[PayloadByte, ...]]:
        if self.out_queue and self.out_queue[0][0] is PacketType.VERSION_NEGOTIATION:
            return [self._version_negotiation(ctx)]
        return self.build_packets(ctx)

    def _version_negotiation(self, ctx: PathContext) -> Tuple[PayloadByte, ...]:
        from .wire import encode_packet

        self.out_queue.pop(0)
        pkt = Packet(PacketType.VERSION_NEGOTIATION, self.cid, 0, (0, 0, 0, 0),
                     versions=(SUPPORTED_VERSION,))
        return encode_packet(pkt, ctx)


class PicoEndpoint:
    """Frontend that drives a :class:`PicoConnection` over the modeled socket."""

    impl = "pico"
    applicable_defects = PicoConnection.applicable_defects

    def __init__(self, role, scenario, defects=(), proposed_version=None):
        self.conn = PicoConnection(role, scenario, defects, proposed_version)

    role = property(lambda self: self.conn.role)
    scenario = property(lambda self: self.conn.scenario)
    defects = property(lambda self: self.conn.defects)
    terminal = property(lambda self: self.conn.terminal)
    phase = property(lambda self: self.conn.phase)
    idle_ticks = property(lambda self: self.conn.idle_ticks)

    def belief_state(self):
        return self.conn.belief_state()

    def _flush(self, io: EndpointIO) -> None:
        for payload in self.conn.prepare(io.ctx):
            io.send(payload)

    def _status(self) -> Progress:
        return Progress.FINISHED if self.conn.terminal else Progress.PROGRESSED

    def advance(self, io: EndpointIO) -> Progress:
        c = self.conn
        if c.role == CLIENT and c.phase is Phase.IDLE:
            c.connect(io.ctx)
            self._flush(io)
            return Progress.PROGRESSED
        dg: Optional[Datagram] = io.recv()
        if dg is None:
            return Progress.BLOCKED
        c.incoming(dg.payload, io.ctx)
        self._flush(io)
        return self._status()

    def tick(self, io: EndpointIO) -> Progress:
        result = self.conn.on_timer(io.ctx)
        self._flush(io)
        return result
