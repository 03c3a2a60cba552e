import copy
import pickle

import pytest

from quicinterop.channel import ChannelConfig
from quicinterop.explore.context import PathContext
from quicinterop.explore.records import Fault, FaultKind
from quicinterop.harness import CLIENT, SERVER, HarnessParams, QuicProgram, WorldIO, new_world
from quicinterop.netmodel import Datagram, EventLoop, WatcherState
from quicinterop.symval import ConstraintStore
from quicinterop.toyquic import (PICO, QUANT, S1, S2, S3, Phase, Progress, StreamState,
                                 create_endpoint)
from quicinterop.toyquic.base import ABORT_TICKS, PASSIVE_ABORT_TICKS, RETRANSMIT_EVERY


class Wire:
    """Minimal socket/loop access that records what an endpoint sends."""

    def __init__(self):
        self.ctx = PathContext(ConstraintStore(), [])
        self.loop = EventLoop()
        self.sent = []
        self.inbox = []

    def send(self, payload):
        self.sent.append(tuple(payload))

    def recv(self):
        return self.inbox.pop(0) if self.inbox else None

    def readable(self):
        return bool(self.inbox)


def run_to_end(params, max_steps=10_000):
    program = QuicProgram(params)
    world = program.initial_world()
    ctx = PathContext(ConstraintStore(), [])
    for _ in range(max_steps):
        out = program.step(world, ctx)
        if out is not None:
            return world, out, ctx
    raise AssertionError("run did not finish")


def test_create_endpoint_validation():
    ep = create_endpoint(PICO, CLIENT, S1)
    b = ep.belief_state()
    assert b.phase is Phase.IDLE and b.app_bytes_sent_total == b.app_bytes_received_total == 0
    assert b.streams == () and not b.timeout_flag and b.close_code is None
    assert create_endpoint(QUANT, SERVER, S2, {"D1"}).defects == {"D1"}
    for impl, role, defects in [(QUANT, CLIENT, {"D3"}), (PICO, SERVER, {"D3"}),
                                (PICO, CLIENT, {"D1"}), (QUANT, SERVER, {"D3"})]:
        with pytest.raises(ValueError):
            create_endpoint(impl, role, S3, defects)
    with pytest.raises(ValueError):
        create_endpoint("msquic", CLIENT, S1)
    with pytest.raises(ValueError):
        create_endpoint(PICO, CLIENT, "S4")


@pytest.mark.parametrize("impl", [PICO, QUANT])
def test_fresh_client_emits_initial_then_blocks(impl):
    io = Wire()
    ep = create_endpoint(impl, CLIENT, S1)
    assert ep.advance(io) is Progress.PROGRESSED
    results = [ep.advance(io) for _ in range(3)]
    assert len(io.sent) == 1 and io.sent[0][0] == 0xFC  # a long-header Initial
    assert results[-1] is Progress.BLOCKED


@pytest.mark.parametrize("impl", [PICO, QUANT])
def test_ticks_retransmit_then_abort(impl):
    io = Wire()
    ep = create_endpoint(impl, CLIENT, S1)
    ep.advance(io)
    while ep.advance(io) is not Progress.BLOCKED:
        pass
    results = []
    for _ in range(ABORT_TICKS):
        results.append(ep.tick(io))
        while not ep.terminal and ep.advance(io) is Progress.PROGRESSED:
            pass
    assert results[0] is Progress.BLOCKED
    assert results[RETRANSMIT_EVERY - 1] is Progress.PROGRESSED
    assert results[-1] is Progress.FINISHED
    assert len(io.sent) == 1 + (ABORT_TICKS - 1) // RETRANSMIT_EVERY
    b = ep.belief_state()
    assert b.phase is Phase.FAILED and b.timeout_flag


def test_tick_counter_resets_on_accepted_packet():
    params = HarnessParams(PICO, PICO, S1)
    ctx = PathContext(ConstraintStore(), [])
    world = new_world(params, ctx)
    client = world.client
    client.advance(WorldIO(world, CLIENT, ctx))
    client.tick(WorldIO(world, CLIENT, ctx))
    assert client.idle_ticks == 1
    world.server.advance(WorldIO(world, SERVER, ctx))  # answers the Initial
    client.advance(WorldIO(world, CLIENT, ctx))
    assert client.idle_ticks == 0
    assert client.tick(WorldIO(world, CLIENT, ctx)) is Progress.BLOCKED  # no spurious retransmit


@pytest.mark.parametrize("scenario, req, resp", [(S1, 0, 0), (S2, 15, 0), (S3, 15, 1)])
@pytest.mark.parametrize("client_impl", [PICO, QUANT])
@pytest.mark.parametrize("server_impl", [PICO, QUANT])
def test_clean_runs_report_expected_beliefs(scenario, req, resp, client_impl, server_impl):
    world, outcome, _ = run_to_end(HarnessParams(client_impl, server_impl, scenario))
    assert outcome.faults == ()
    c, s = world.client.belief_state(), world.server.belief_state()
    assert c.phase is Phase.CLOSED and s.phase is Phase.CLOSED
    assert s.app_bytes_received_total == c.app_bytes_sent_total == req
    assert c.app_bytes_received_total == s.app_bytes_sent_total == resp
    if scenario != S1:
        assert c.stream(0).state is StreamState.CLOSED and s.stream(0).state is StreamState.CLOSED


def test_d1_server_closes_stream_without_telling_the_client():
    world, outcome, ctx = run_to_end(HarnessParams(PICO, QUANT, S2, server_defects=("D1",)))
    assert "quant.server.silent_close" in ctx.coverage
    c, s = world.client.belief_state(), world.server.belief_state()
    assert s.stream(0).fin_sent and not c.stream(0).fin_received
    assert s.phase is Phase.CLOSED and c.phase is Phase.FAILED and c.timeout_flag
    assert [f.kind for f in outcome.faults] == [FaultKind.INTEROP_DIVERGENCE]


def test_d2_close_path_has_one_released_dispatch():
    world, outcome, _ = run_to_end(HarnessParams(PICO, QUANT, S1, server_defects=("D2",)))
    released = [w for w in world.loop.watchers.values() if w.state is WatcherState.RELEASED]
    assert len(released) == 1 and released[0].owner == SERVER
    assert [(f.kind, f.defect_tag) for f in outcome.faults] == [(FaultKind.LIFECYCLE_FAULT, "D2")]
    world, outcome, _ = run_to_end(HarnessParams(PICO, QUANT, S1))
    assert outcome.faults == ()
    assert all(w.state is WatcherState.STOPPED for w in world.loop.watchers.values()
               if w.owner == SERVER)


def test_quant_receives_only_through_watchers():
    _, _, ctx = run_to_end(HarnessParams(QUANT, QUANT, S3))
    assert "evloop.dispatch" in ctx.coverage
    _, _, ctx = run_to_end(HarnessParams(PICO, PICO, S3))
    assert "evloop.dispatch" not in ctx.coverage


def test_pico_connection_never_touches_io():
    ep = create_endpoint(PICO, CLIENT, S1)
    io = Wire()
    ep.conn.connect(io.ctx)
    assert io.sent == []  # packets are only prepared
    assert len(ep.conn.prepare(io.ctx)) == 1


def test_d3_client_keeps_reserved_version():
    v = (0xBA, 0xBA, 0xBA, 0xBA)
    io = Wire()
    guarded = create_endpoint(PICO, CLIENT, S3, (), v)
    guarded.advance(io)
    armed = create_endpoint(PICO, CLIENT, S3, {"D3"}, v)
    armed.advance(io)
    assert guarded.belief_state().version_in_use == (0, 0, 0, 1)
    assert armed.belief_state().version_in_use == v


def test_d4_needs_drops():
    from oracles import concrete_run

    params = HarnessParams(PICO, QUANT, S3, server_defects=("D4",),
                           channel=ChannelConfig(drops=True, max_drops=3))
    _, outcome, _ = concrete_run(params, frozenset())
    assert outcome.faults == ()
    _, outcome, _ = concrete_run(params, frozenset({4, 5}))
    assert [(f.kind, f.defect_tag) for f in outcome.faults] == [(FaultKind.GUARD_FAULT, "D4")]


def test_terminal_transition_is_rejected():
    ep = create_endpoint(PICO, CLIENT, S1).conn
    ep.set_phase(Phase.CLOSED)
    ep.set_phase(Phase.CLOSED)
    with pytest.raises(Fault) as exc:
        ep.set_phase(Phase.ESTABLISHED)
    assert exc.value.signature.kind is FaultKind.INVALID_TRANSITION


@pytest.mark.parametrize("impl", [PICO, QUANT])
def test_endpoints_are_independent_values(impl):
    params = HarnessParams(impl, impl, S3)
    ctx = PathContext(ConstraintStore(), [])
    world = new_world(params, ctx)
    world.client.advance(WorldIO(world, CLIENT, ctx))
    twin = copy.deepcopy(world)
    before = pickle.dumps(twin)
    for _ in range(5):
        world.server.advance(WorldIO(world, SERVER, ctx))
        world.client.advance(WorldIO(world, CLIENT, ctx))
    assert pickle.dumps(twin) == before
    assert world.client.belief_state() != twin.client.belief_state()


def test_passive_server_outlasts_client():
    assert PASSIVE_ABORT_TICKS > ABORT_TICKS > RETRANSMIT_EVERY
    dg = Datagram(("a", 1), ("b", 2), ())
    assert dg.transmit_index == -1
