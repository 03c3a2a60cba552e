"""Lockstep co-simulation of a client and a server plus the two oracles.

One world holds both endpoints, the socket table, the event loop and the
channel.  ``step`` performs exactly one endpoint ``advance`` (or one round
of timer ticks) so the engine can snapshot between calls.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .channel import ChannelConfig, ChannelState, transmit
from .explore.context import PathContext, Sym
from .explore.records import Fault, FaultKind, FaultSignature, Outcome
from .netmodel import Datagram, EventLoop, SocketTable, socket_recv, socket_send
from .probes import define_probe, define_site
from .symval import PredKind
from .toyquic import (CLIENT, PICO, QUANT, REQUEST, RESPONSE, S1, S2, S3, SERVER, BeliefState,
                      Phase, Progress, create_endpoint)
from .toyquic.base import CLOSE_OK, PASSIVE_ABORT_TICKS, REQUEST_STREAM
from .toyquic.wire import LONG_FORM, LONG_HDR_LEN, SHORT_HDR_LEN

SYMBOLIC = "symbolic"

ADDR = {CLIENT: ("10.0.0.1", 50000), SERVER: ("10.0.0.2", 4433)}
SOCK = {CLIENT: 0, SERVER: 1}
PEER = {CLIENT: SERVER, SERVER: CLIENT}
TICK = "Tick"

# consecutive silent tick rounds after which the world counts as quiescent;
# every endpoint has given up well before this
IDLE_ROUND_LIMIT = PASSIVE_ABORT_TICKS + 2

SITE_SCENARIO = define_site("harness.scenario_select")
P_INTEROP_BYTES, P_INTEROP_FIN, P_INTEROP_TOTALS, P_INTEROP_PHASE, P_QUIESCENT = (
    define_probe("interop.bytes"), define_probe("interop.fin"), define_probe("interop.totals"),
    define_probe("interop.phase"), define_probe("harness.quiescent"))
SCENARIO_PROBE = {s: define_probe(f"scenario.{s}") for s in (S1, S2, S3)}


class RoundResult(str, enum.Enum):
    PROGRESSED = "Progressed"
    QUIESCENT = "Quiescent"
    TERMINAL = "Terminal"


@dataclass(frozen=True)
class HarnessParams:
    client_impl: str = PICO
    server_impl: str = QUANT
    scenario: str = S3  # or SYMBOLIC
    client_defects: Tuple[str, ...] = ()
    server_defects: Tuple[str, ...] = ()
    channel: ChannelConfig = ChannelConfig()
    sym_version: bool = False

    @property
    def defects(self) -> Tuple[str, ...]:
        return tuple(sorted(set(self.client_defects) | set(self.server_defects)))

    def to_json(self) -> dict:
        return {
            "client_impl": self.client_impl, "server_impl": self.server_impl,
            "scenario": self.scenario, "client_defects": list(self.client_defects),
            "server_defects": list(self.server_defects), "channel": self.channel.to_json(),
            "sym_version": self.sym_version,
        }

    @classmethod
    def from_json(cls, d: dict) -> "HarnessParams":
        return cls(d["client_impl"], d["server_impl"], d["scenario"],
                   tuple(d["client_defects"]), tuple(d["server_defects"]),
                   ChannelConfig(**d["channel"]), d["sym_version"])


@dataclass
class WorldState:
    params: HarnessParams
    scenario: Optional[str] = None
    client: object = None
    server: object = None
    sockets: SocketTable = field(default_factory=SocketTable)
    loop: EventLoop = field(default_factory=EventLoop)
    chan: ChannelState = field(default_factory=ChannelState)
    round: int = 0
    turn: str = CLIENT
    round_progress: bool = False
    idle_rounds: int = 0
    quiescent: bool = False
    faults: List[FaultSignature] = field(default_factory=list)

    def endpoint(self, role: str):
        return self.client if role == CLIENT else self.server

    @property
    def ready(self) -> bool:
        return self.client is not None

    @property
    def both_terminal(self) -> bool:
        return self.client.terminal and self.server.terminal

    def in_flight(self) -> int:
        """Datagrams still waiting at an endpoint that will read them."""
        return sum(len(self.sockets.sockets[SOCK[r]].queue)
                   for r in (CLIENT, SERVER) if not self.endpoint(r).terminal)


def sealed_offset(payload) -> int:
    b0 = payload[0] if payload else 0
    if isinstance(b0, Sym):
        return 0
    return LONG_HDR_LEN if b0 & LONG_FORM else SHORT_HDR_LEN


class WorldIO:
    """Socket and loop access handed to one endpoint for one call."""

    def __init__(self, world: WorldState, role: str, ctx: PathContext):
        self.ctx = ctx
        self.loop = world.loop
        self._world = world
        self._role = role
        self._sock = SOCK[role]

    def send(self, payload) -> None:
        w = self._world
        dg = Datagram(ADDR[self._role], ADDR[PEER[self._role]], tuple(payload),
                      sealed_at=sealed_offset(payload))
        transmit(w.params.channel, w.chan, w.sockets, socket_send(w.sockets, self._sock, dg),
                 self.ctx)

    def recv(self) -> Optional[Datagram]:
        return socket_recv(self._world.sockets, self._sock)

    def readable(self) -> bool:
        return bool(self._world.sockets.sockets[self._sock].queue)


# -- setup ---------------------------------------------------------------------

def select_scenario(ctx: PathContext) -> str:
    x = ctx.fresh()
    ctx.constrain(x, PredKind.LT, 3)
    if ctx.test(SITE_SCENARIO, x, PredKind.EQ, 0):
        return S1
    if ctx.test(SITE_SCENARIO, x, PredKind.EQ, 1):
        return S2
    return S3


def setup(world: WorldState, ctx: PathContext) -> None:
    p = world.params
    world.scenario = select_scenario(ctx) if p.scenario == SYMBOLIC else p.scenario
    version = tuple(ctx.fresh() for _ in range(4)) if p.sym_version else None
    world.client = create_endpoint(p.client_impl, CLIENT, world.scenario, p.client_defects, version)
    world.server = create_endpoint(p.server_impl, SERVER, world.scenario, p.server_defects)
    for role in (CLIENT, SERVER):
        world.sockets.bind(SOCK[role], ADDR[role])


def new_world(params: HarnessParams, ctx: Optional[PathContext] = None) -> WorldState:
    w = WorldState(params)
    if ctx is not None:
        setup(w, ctx)
    return w


# -- scheduling ----------------------------------------------------------------

def _next_turn(world: WorldState) -> None:
    world.turn = {CLIENT: SERVER, SERVER: TICK}[world.turn]


def _new_round(world: WorldState) -> None:
    world.round += 1
    world.turn = CLIENT
    world.round_progress = False


def schedule_once(world: WorldState, ctx: PathContext) -> Optional[RoundResult]:
    """Perform one advance or one tick round.

    Returns ``TERMINAL``/``QUIESCENT`` when the run is over, ``PROGRESSED``
    when a round just completed, and None mid-round.
    """
    while True:
        if world.both_terminal:
            return RoundResult.TERMINAL
        if world.turn == TICK:
            if world.round_progress or world.in_flight():
                world.idle_rounds = 0
                _new_round(world)
                return RoundResult.PROGRESSED
            for role in (CLIENT, SERVER):
                ep = world.endpoint(role)
                if not ep.terminal:
                    ep.tick(WorldIO(world, role, ctx))
            world.idle_rounds += 1
            _new_round(world)
            if world.both_terminal:
                return RoundResult.TERMINAL
            if world.idle_rounds > IDLE_ROUND_LIMIT:
                world.quiescent = True
                ctx.hit(P_QUIESCENT)
                return RoundResult.QUIESCENT
            return RoundResult.PROGRESSED
        ep = world.endpoint(world.turn)
        if ep.terminal:
            _next_turn(world)
            continue
        result = ep.advance(WorldIO(world, world.turn, ctx))
        if result is Progress.PROGRESSED:
            world.round_progress = True
        else:
            world.round_progress = world.round_progress or result is Progress.FINISHED
            _next_turn(world)
        return RoundResult.TERMINAL if world.both_terminal else None


def lockstep_round(world: WorldState, ctx: PathContext) -> RoundResult:
    """Advance client then server until each blocks, ticking when the network is silent."""
    if not world.ready:
        setup(world, ctx)
    while True:
        try:
            r = schedule_once(world, ctx)
        except Fault as f:
            world.faults.append(f.signature)
            return RoundResult.TERMINAL
        if r is not None:
            return r


# -- oracles -------------------------------------------------------------------

def check_robustness(world: WorldState) -> List[FaultSignature]:
    return list(world.faults)


_COMPATIBLE = {
    frozenset({Phase.CLOSED}), frozenset({Phase.CLOSED, Phase.CLOSING}),
    frozenset({Phase.FAILED}), frozenset({Phase.FAILED, Phase.CLOSING}),
}


def phases_compatible(a: BeliefState, b: BeliefState) -> bool:
    pair = frozenset({a.phase, b.phase})
    if pair in _COMPATIBLE:
        return True
    if pair == frozenset({Phase.FAILED, Phase.CLOSED}):
        failed = a if a.phase is Phase.FAILED else b
        return failed.timeout_flag
    return False


def _stream_ids(a: BeliefState, b: BeliefState):
    return sorted({sid for sid, _ in a.streams} | {sid for sid, _ in b.streams})


def compatibility(client: BeliefState, server: BeliefState) -> Optional[FaultSignature]:
    """First violated compatibility rule between two final belief states, or None."""
    beliefs = {CLIENT: client, SERVER: server}

    def divergence(role, probe):
        return FaultSignature(FaultKind.INTEROP_DIVERGENCE, role, probe)

    for sid in _stream_ids(client, server):
        for sender in (CLIENT, SERVER):
            receiver = PEER[sender]
            tx, rx = beliefs[sender].stream(sid), beliefs[receiver].stream(sid)
            if rx is not None and rx.bytes_received > (tx.bytes_sent if tx else 0):
                return divergence(receiver, P_INTEROP_BYTES)
    both_terminal = client.phase.terminal and server.phase.terminal
    if both_terminal:
        for sid in _stream_ids(client, server):
            for sender in (CLIENT, SERVER):
                s, r = beliefs[sender], beliefs[PEER[sender]]
                tx, rx = s.stream(sid), r.stream(sid)
                if tx is None or not tx.fin_sent or (rx is not None and rx.fin_received):
                    continue
                # the sender considers the stream finished; the receiver never saw its end
                sender_done = tx.state.value == "Closed"
                receiver_clean = r.phase is Phase.CLOSED and r.close_code == CLOSE_OK
                if sender_done or receiver_clean:
                    return divergence(sender, P_INTEROP_FIN)
        if client.phase is Phase.CLOSED and server.phase is Phase.CLOSED:
            if client.app_bytes_sent_total != server.app_bytes_received_total:
                return divergence(SERVER, P_INTEROP_TOTALS)
            if server.app_bytes_sent_total != client.app_bytes_received_total:
                return divergence(CLIENT, P_INTEROP_TOTALS)
    if not phases_compatible(client, server):
        blamed = SERVER if client.phase is Phase.FAILED else CLIENT
        return divergence(blamed, P_INTEROP_PHASE)
    return None


def _clean_close(b: BeliefState) -> bool:
    return b.phase is Phase.CLOSED and b.close_code == CLOSE_OK and not b.timeout_flag


def scenario_fulfilled(scenario: str, client: BeliefState, server: BeliefState) -> Optional[str]:
    """None when fulfilled, else the role whose belief falls short."""
    if not _clean_close(client):
        return CLIENT
    if not _clean_close(server):
        return SERVER
    if scenario == S1:
        return None
    cs = client.stream(REQUEST_STREAM)
    if cs is None or not (cs.fin_sent and cs.fin_received):
        return CLIENT
    if server.app_bytes_received_total != len(REQUEST):
        return SERVER
    expected = len(RESPONSE) if scenario == S3 else 0
    if client.app_bytes_received_total != expected:
        return CLIENT
    return None


def check_interop(world: WorldState) -> Optional[FaultSignature]:
    c, s = world.client.belief_state(), world.server.belief_state()
    sig = compatibility(c, s)
    if sig is not None:
        return sig
    if world.chan.perturbed:
        return None
    role = scenario_fulfilled(world.scenario, c, s)
    if role is None:
        return None
    return FaultSignature(FaultKind.SCENARIO_UNFULFILLED, role, SCENARIO_PROBE[world.scenario])


def conclude(world: WorldState) -> Outcome:
    faults = check_robustness(world)
    if world.quiescent or world.both_terminal:
        sig = check_interop(world)
        if sig is not None:
            faults.append(sig)
    return Outcome.of(faults)


# -- exploration program ---------------------------------------------------------

class QuicProgram:
    """The harness as a step function for the exploration engine."""

    def __init__(self, params: HarnessParams, config_name: str = "custom", extra: Optional[dict] = None):
        self.params = params
        self.config_name = config_name
        self.extra = dict(extra or {})

    def initial_world(self) -> WorldState:
        return WorldState(self.params)

    def step(self, world: WorldState, ctx: PathContext) -> Optional[Outcome]:
        if not world.ready:
            setup(world, ctx)
            return None
        try:
            r = schedule_once(world, ctx)
        except Fault as f:
            world.faults.append(f.signature)
            return conclude(world)
        if r in (RoundResult.TERMINAL, RoundResult.QUIESCENT):
            return conclude(world)
        return None

    def scenario_of(self, world: WorldState) -> str:
        return world.scenario or self.params.scenario

    def test_case_fields(self) -> dict:
        return {"defects": list(self.params.defects),
                "params": {"harness": self.params.to_json(), **self.extra}}
