import pytest
from hypothesis import given
from hypothesis import strategies as st

from quicinterop.explore import DFS, Explorer, Fault, Outcome
from quicinterop.explore.context import PathContext
from quicinterop.harness import SERVER, HarnessParams, WorldIO, new_world
from quicinterop.netmodel import Datagram, deliver
from quicinterop.symval import ConstraintStore
from quicinterop.toyquic import SUPPORTED_VERSION
from quicinterop.toyquic.base import CLIENT_CID
from quicinterop.toyquic.wire import (Ack, Close, Handshake, Packet, PacketType, Padding,
                                      ParseReject, Ping, ResetStream, Stream, bytes_eq,
                                      decode_packet, encode_packet, is_reserved_version,
                                      parse_header)

byte = st.integers(0, 255)
quad = st.tuples(byte, byte, byte, byte)
frame = st.one_of(
    st.builds(Ping), st.builds(Ack, byte), st.builds(Handshake, byte), st.builds(Close, byte),
    st.builds(ResetStream, st.integers(0, 127), byte),
    st.builds(Stream, st.integers(0, 127), byte, st.lists(byte, max_size=20).map(tuple), st.booleans()),
)


@st.composite
def packets(draw):
    ptype = draw(st.sampled_from([PacketType.INITIAL, PacketType.HANDSHAKE, PacketType.SHORT,
                                  PacketType.VERSION_NEGOTIATION]))
    cid, pn = draw(quad), draw(byte)
    if ptype is PacketType.VERSION_NEGOTIATION:
        return Packet(ptype, cid, pn, draw(quad), (), tuple(draw(st.lists(quad, max_size=4))))
    frames = tuple(draw(st.lists(frame, max_size=6)))
    if draw(st.booleans()):
        frames += (Padding(draw(st.integers(1, 8))),)
    version = None if ptype is PacketType.SHORT else draw(quad)
    return Packet(ptype, cid, pn, version, frames)


@given(packets())
def test_round_trip(pkt):
    assert decode_packet(encode_packet(pkt)) == pkt


def test_worked_example_bytes():
    pkt = Packet(PacketType.INITIAL, CLIENT_CID, 0, SUPPORTED_VERSION, (Handshake(1),))
    wire = encode_packet(pkt)
    assert wire[:12] == (0xFC, 0, 0, 0, 1, 0xC1, 0x1E, 0x47, 0x01, 0x00, 0x03, 0x01)
    assert len(wire) == 10 + 2 + 4
    short = encode_packet(Packet(PacketType.SHORT, CLIENT_CID, 5, None, (Stream(0, 0, (65,), True),)))
    assert short[:11] == (0x40, 0xC1, 0x1E, 0x47, 0x01, 5, 0x04, 0x80, 0, 1, 65)


@pytest.mark.parametrize("payload", [(), (0x00,) * 20, (0xBF,) * 20, (0xFC, 0, 0), (0x40, 1)])
def test_malformed_is_rejected(payload):
    with pytest.raises(ParseReject):
        decode_packet(payload)


def test_unassigned_type_rejected_by_generic_decoder():
    wire = list(encode_packet(Packet(PacketType.HANDSHAKE, CLIENT_CID, 0, SUPPORTED_VERSION, ())))
    wire[0] = 0xFF
    assert parse_header(wire).ptype is PacketType.INVALID
    with pytest.raises(ParseReject):
        decode_packet(wire)


def _quant_server_sees(first_byte: int, d5: bool):
    params = HarnessParams(server_defects=("D5",) if d5 else ())
    ctx = PathContext(ConstraintStore(), [])
    world = new_world(params, ctx)
    wire = list(encode_packet(Packet(PacketType.INITIAL, CLIENT_CID, 0, SUPPORTED_VERSION,
                                     (Handshake(1),))))
    wire[0] = first_byte
    deliver(world.sockets, Datagram(("10.0.0.1", 50000), ("10.0.0.2", 4433), tuple(wire)))
    try:
        world.server.advance(WorldIO(world, SERVER, ctx))
    except Fault as f:
        return f.signature
    return None


def test_dispatch_guard_brute_force_over_first_byte():
    faulting = {b for b in range(256) if _quant_server_sees(b, d5=True) is not None}
    # long-header bit, the fixed bits and type bits 0b11 all set
    expected = {b for b in range(256) if b & 0x80 and b & 0x7C == 0x7C and b & 0x03 == 0x03}
    assert faulting == expected == {0xFF}
    sig = _quant_server_sees(0xFF, d5=True)
    assert (sig.kind.value, sig.endpoint, sig.probe, sig.defect_tag) == (
        "GuardFault", "Server", "quant.server.dispatch", "D5")
    assert all(_quant_server_sees(b, d5=False) is None for b in range(256))


class VersionCheck:
    """Explores the byte-wise comparison of a symbolic version against 0x00000001."""

    config_name = "version-check"

    def initial_world(self):
        return {}

    def step(self, w, ctx):
        v = tuple(ctx.fresh() for _ in range(4))
        w["eq"] = bytes_eq(ctx, "test.version", v, SUPPORTED_VERSION)
        return Outcome.of(())

    def scenario_of(self, w):
        return "-"

    def test_case_fields(self):
        return {"defects": [], "params": {}}


def test_symbolic_version_comparison_short_circuits():
    rep = Explorer(VersionCheck(), DFS).run()
    lens = [sum(c.kind.value == "PredicateBranch" for c in tc.choices) for tc in rep.all_test_cases]
    # equal path tests all four bytes; the k-th unequal path stops after k+1 tests
    assert lens == [4, 4, 3, 2, 1]
    assert [tuple(tc.witnesses[i] for i in range(4)) for tc in rep.all_test_cases][0] == SUPPORTED_VERSION


def test_reserved_check_uses_four_mask_predicates():
    ctx = PathContext(ConstraintStore(), [])
    v = tuple(ctx.fresh() for _ in range(4))
    ctx.pending = [True] * 4
    assert is_reserved_version(ctx, "test.reserved", v)
    preds = [c.info["predicate"] for c in ctx.trace]
    assert [(p["kind"], p["mask"], p["constant"]) for p in preds] == [("MaskEq", 0x0F, 0x0A)] * 4
    n = 1
    for var in range(4):
        n *= len(ctx.store.values(var))
    assert n == 65536
    from quicinterop.symval import witness
    assert [witness(ctx.store, var) for var in range(4)] == [0x0A] * 4
    assert is_reserved_version(None, "x", (0xBA, 0xBA, 0xBA, 0xBA))
    assert not is_reserved_version(None, "x", SUPPORTED_VERSION)
