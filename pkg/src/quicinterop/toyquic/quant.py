"""Event-loop endpoint: all receives and sends run as watcher callbacks.

Each ``advance`` call is one non-blocking loop iteration that dispatches at
most one watcher: the socket-readable watcher when a datagram is queued,
otherwise the async flush watcher when output is pending.  Packets are
routed through a per-type handler table.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional

from ..explore.context import PathContext
from ..netmodel import IntegrityError, open_sealed, watcher_dispatch
from ..probes import define_probes, define_site
from .base import (CLIENT, CLOSE_OK, REQUEST, REQUEST_STREAM, RESPONSE, S1, S2, S3, SERVER,
                   EndpointBase, EndpointIO, Phase, Progress, StreamRecord, StreamState,
                   guard_fault)
from .wire import (SUPPORTED_VERSION, Ack, Close, Handshake, Header, Packet, PacketType,
                   ParseReject, ResetStream, Stream, bytes_eq, encode_packet,
                   is_reserved_version, parse_body, parse_header)

SITE_CID = define_site("quant.cid_match")
SITE_VERSION = define_site("quant.version_match")
SITE_SRV_VERSION = define_site("quant.server.version_supported")
SITE_SRV_RESERVED = define_site("quant.server.version_reserved")

(P_RX, P_TX, P_DISPATCH, P_REJECT, P_TAG, P_INITIAL, P_VN_SENT, P_RESERVED, P_HS_RECORD,
 P_HS_DISCARD, P_SILENT_CLOSE, P_RESPONSE, P_CLOSE_PATH, P_CLI_HS2, P_CLI_HS4, P_CLI_VN,
 P_CLOSE_SENT, P_STREAM) = define_probes(
    "quant.rx", "quant.tx", "quant.server.dispatch", "quant.parse_reject", "quant.tag_mismatch",
    "quant.server.initial", "quant.server.vn_sent", "quant.server.ignore_reserved",
    "quant.server.hs_record", "quant.server.hs_discard", "quant.server.silent_close",
    "quant.server.response", "quant.close_path", "quant.client.hs2", "quant.client.hs4",
    "quant.client.vn", "quant.client.close", "quant.stream")

RX, TX = "rx", "tx"


class HandshakeRecord:
    __slots__ = ("cid", "stage")

    def __init__(self, cid, stage):
        self.cid = cid
        self.stage = stage

    def __getstate__(self):
        return (self.cid, self.stage)

    def __setstate__(self, s):
        self.cid, self.stage = s


class QuantEndpoint(EndpointBase):
    impl = "quant"
    applicable_defects = {CLIENT: frozenset({"D2"}),
                          SERVER: frozenset({"D1", "D2", "D4", "D5"})}

    def __init__(self, role, scenario, defects=(), proposed_version=None):
        super().__init__(role, scenario, defects, proposed_version or SUPPORTED_VERSION)
        self.watchers: Dict[str, int] = {}
        self.hs_record: Optional[HandshakeRecord] = None
        self.short_seen = False
        self.confirmed = False
        self.vn_retried = False
        self.responded = False
        self.closing_down = False

    # -- loop plumbing ---------------------------------------------------------
    def _ensure_watchers(self, io: EndpointIO) -> None:
        if not self.watchers:
            self.watchers[RX] = io.loop.register(self.role, RX)
            self.watchers[TX] = io.loop.register(self.role, TX)

    def _has_output(self) -> bool:
        return bool(self.out_queue or self.ack_queue)

    def _run_once(self, io: EndpointIO) -> Progress:
        for wid in io.loop.registered(self.role):
            tag = io.loop.watchers[wid].callback
            ready = io.readable() if tag == RX else self._has_output()
            if not ready and io.loop.watchers[wid].state.value != "Released":
                continue
            cb = watcher_dispatch(io.loop, wid, io.ctx)
            if cb == RX:
                self._on_readable(io)
            elif cb == TX:
                self._on_flush(io)
            if self.closing_down:
                self._close_path(io)
            return Progress.FINISHED if self.terminal else Progress.PROGRESSED
        return Progress.BLOCKED

    def advance(self, io: EndpointIO) -> Progress:
        self._ensure_watchers(io)
        if self.role == CLIENT and self.phase is Phase.IDLE:
            self.set_phase(Phase.CONNECTING)
            self.queue(PacketType.INITIAL, Handshake(1))
            return Progress.PROGRESSED
        return self._run_once(io)

    def tick(self, io: EndpointIO) -> Progress:
        self._ensure_watchers(io)
        result = self.on_timer(io.ctx)
        if self.terminal:
            self.closing_down = True
            self._close_path(io)
        return result

    def _on_flush(self, io: EndpointIO) -> None:
        io.ctx.hit(P_TX)
        if self.out_queue and self.out_queue[0][0] is PacketType.VERSION_NEGOTIATION:
            self.out_queue.pop(0)
            io.send(encode_packet(Packet(PacketType.VERSION_NEGOTIATION, self.cid, 0, (0, 0, 0, 0),
                                         versions=(SUPPORTED_VERSION,)), io.ctx))
            return
        for payload in self.build_packets(io.ctx):
            io.send(payload)

    def _close_path(self, io: EndpointIO) -> None:
        """Tear down the connection's watchers, then flush any final packets."""
        io.ctx.hit(P_CLOSE_PATH)
        self.closing_down = False
        rx, tx = self.watchers[RX], self.watchers[TX]
        if self.has("D2"):
            # frees the read watcher while the loop still polls it
            io.loop.release(rx, defect="D2")
        else:
            io.loop.stop(rx)
        # final non-blocking loop pass to push out the CLOSE
        for wid in io.loop.registered(self.role):
            cb = watcher_dispatch(io.loop, wid, io.ctx)
            if cb == TX and self._has_output():
                self._on_flush(io)
        io.loop.stop(tx)

    # -- receive path ----------------------------------------------------------
    def _on_readable(self, io: EndpointIO) -> None:
        ctx = io.ctx
        dg = io.recv()
        if dg is None:
            return
        ctx.hit(P_RX)
        try:
            hdr = parse_header(dg.payload, ctx)
        except ParseReject:
            ctx.hit(P_REJECT)
            return
        table = self._server_table if self.role == SERVER else self._client_table
        if self.role == SERVER and hdr.ptype is PacketType.SHORT:
            table = {PacketType.SHORT: QuantEndpoint._srv_short}
        elif self.role == SERVER:
            ctx.hit(P_DISPATCH)
            if hdr.ptype >= len(table):
                if self.has("D5"):
                    # unguarded table lookup past the end
                    raise guard_fault(self.role, P_DISPATCH, "D5")
                ctx.hit(P_REJECT)
                return
        elif hdr.ptype not in table:
            ctx.hit(P_REJECT)
            return
        try:
            body = open_sealed(dg.payload[hdr.length:], ctx)
            pkt = parse_body(hdr, body)
        except (IntegrityError, ParseReject):
            ctx.hit(P_TAG)
            return
        handler: Callable = table[hdr.ptype]
        handler(self, pkt, ctx)

    def _common_frames(self, pkt: Packet, ctx: PathContext, on_stream_fin=None) -> bool:
        """ACK/STREAM/CLOSE handling; returns False once the connection closed."""
        if pkt.ack_eliciting:
            self.ack(pkt.pn)
        for f in pkt.frames:
            if isinstance(f, Ack):
                self.on_ack(f.largest)
            elif isinstance(f, Stream):
                ctx.hit(P_STREAM)
                if self.receive_stream(f) and on_stream_fin is not None:
                    on_stream_fin(ctx)
            elif isinstance(f, ResetStream):
                self.streams.setdefault(f.stream_id, StreamRecord()).reset = True
            elif isinstance(f, Close):
                self.close_code = f.code
                if self.role == SERVER:
                    self.queue(PacketType.SHORT, Close(CLOSE_OK))
                self.set_phase(Phase.CLOSED)
                self.closing_down = True
                return False
        return True

    # -- server handlers -------------------------------------------------------
    def _srv_initial(self, pkt: Packet, ctx: PathContext) -> None:
        if self.phase is not Phase.IDLE:
            if bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
                self.accepted()
                self.ack(pkt.pn)
            return
        if Handshake(1) not in pkt.frames:
            return
        ctx.hit(P_INITIAL)
        if not bytes_eq(ctx, SITE_SRV_VERSION, pkt.version, SUPPORTED_VERSION):
            if is_reserved_version(ctx, SITE_SRV_RESERVED, pkt.version):
                ctx.hit(P_RESERVED)
                return
            ctx.hit(P_VN_SENT)
            self.accepted()
            self.cid = pkt.cid
            self.queue(PacketType.VERSION_NEGOTIATION)
            return
        self.accepted()
        self.cid = pkt.cid
        self.version = SUPPORTED_VERSION
        self.hs_record = HandshakeRecord(pkt.cid, 2)
        self.ack(pkt.pn)
        self.set_phase(Phase.CONNECTING)
        self.queue(PacketType.HANDSHAKE, Handshake(2))

    def _srv_handshake(self, pkt: Packet, ctx: PathContext) -> None:
        if self.phase is Phase.IDLE or not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
            return
        if not bytes_eq(ctx, SITE_VERSION, pkt.version, self.version):
            return
        self.accepted()
        for f in pkt.frames:
            if isinstance(f, Handshake) and f.stage == 3:
                ctx.hit(P_HS_RECORD)
                rec = self.hs_record
                if rec is None:
                    # the record was freed early; dereferencing it is the crash
                    raise guard_fault(self.role, P_HS_RECORD, "D4")
                if rec.stage == 2 and self.phase is Phase.CONNECTING:
                    rec.stage = 4
                    self.set_phase(Phase.ESTABLISHED)
                    self.queue(PacketType.HANDSHAKE, Handshake(4))
        self._common_frames(pkt, ctx)

    def _srv_short(self, pkt: Packet, ctx: PathContext) -> None:
        if self.phase is not Phase.ESTABLISHED or not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
            return
        self.accepted()
        if not self.short_seen:
            self.short_seen = True
            if self.has("D4"):
                ctx.hit(P_HS_DISCARD)
                self.hs_record = None
        self._common_frames(pkt, ctx, self._srv_request_done)

    def _srv_request_done(self, ctx: PathContext) -> None:
        if self.responded:
            return
        self.responded = True
        ctx.hit(P_RESPONSE)
        if self.scenario == S3:
            self.send_stream(REQUEST_STREAM, RESPONSE, fin=True)
        elif self.scenario == S2:
            if self.has("D1"):
                ctx.hit(P_SILENT_CLOSE)
                s = self.streams[REQUEST_STREAM]
                s.fin_sent = s.fin_acked = True
            else:
                self.send_stream(REQUEST_STREAM, (), fin=True)

    def _srv_ignore(self, pkt: Packet, ctx: PathContext) -> None:
        pass

    # -- client handlers -------------------------------------------------------
    def _cli_long(self, pkt: Packet, ctx: PathContext) -> None:
        if not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
            return
        if not bytes_eq(ctx, SITE_VERSION, pkt.version, self.version):
            return
        self.accepted()
        for f in pkt.frames:
            if isinstance(f, Handshake):
                if f.stage == 2 and self.phase is Phase.CONNECTING:
                    ctx.hit(P_CLI_HS2)
                    self.discard_unacked(PacketType.INITIAL)
                    self.set_phase(Phase.ESTABLISHED)
                    self.queue(PacketType.HANDSHAKE, Handshake(3))
                    if self.scenario != S1:
                        self.send_stream(REQUEST_STREAM, REQUEST, fin=True)
                elif f.stage == 4:
                    ctx.hit(P_CLI_HS4)
                    self._cli_confirm()
        if self._common_frames(pkt, ctx):
            self._cli_maybe_close(ctx)

    def _cli_vn(self, pkt: Packet, ctx: PathContext) -> None:
        if self.phase is not Phase.CONNECTING or self.vn_retried:
            return
        if not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid) or SUPPORTED_VERSION not in pkt.versions:
            return
        ctx.hit(P_CLI_VN)
        self.accepted()
        self.vn_retried = True
        self.version = SUPPORTED_VERSION
        self.discard_unacked(PacketType.INITIAL)
        self.queue(PacketType.INITIAL, Handshake(1))

    def _cli_short(self, pkt: Packet, ctx: PathContext) -> None:
        if self.phase not in (Phase.ESTABLISHED, Phase.CLOSING):
            return
        if not bytes_eq(ctx, SITE_CID, pkt.cid, self.cid):
            return
        self.accepted()
        self._cli_confirm()
        if self._common_frames(pkt, ctx):
            self._cli_maybe_close(ctx)

    def _cli_confirm(self) -> None:
        if not self.confirmed:
            self.confirmed = True
            self.discard_unacked(PacketType.INITIAL, PacketType.HANDSHAKE)

    def _cli_maybe_close(self, ctx: PathContext) -> None:
        if self.phase is not Phase.ESTABLISHED or not self.confirmed:
            return
        if self.scenario != S1:
            s = self.streams.get(REQUEST_STREAM)
            if s is None or s.state is not StreamState.CLOSED:
                return
        ctx.hit(P_CLOSE_SENT)
        self.queue(PacketType.SHORT, Close(CLOSE_OK))
        self.set_phase(Phase.CLOSING)

    # Indexed by header type; slot 3 deliberately has no entry.
    _server_table = (_srv_initial, _srv_handshake, _srv_ignore)
    _client_table = {
        PacketType.INITIAL: _cli_long,
        PacketType.HANDSHAKE: _cli_long,
        PacketType.VERSION_NEGOTIATION: _cli_vn,
        PacketType.SHORT: _cli_short,
    }
