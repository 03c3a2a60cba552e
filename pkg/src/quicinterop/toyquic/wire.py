"""MiniQUIC wire format.

Long header (10 bytes)::

    byte0    0xfc | type      type: 0 Initial, 1 Handshake, 2 VersionNegotiation
    1..4     version (big-endian)
    5..8     connection id
    9        packet number

Short header (6 bytes)::

    byte0    0x40 | flags     (bit 7 clear)
    1..4     connection id
    5        packet number

The header is followed by the body and a 4-byte FNV-1a tag over the body.
Bits 2..6 of a long-header byte0 are fixed to one, so type value 3 (an
unassigned slot) can only be spelled ``0xff``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from ..explore.context import PathContext, PayloadByte, Sym
from ..netmodel import IntegrityError, open_sealed, seal
from ..probes import define_site
from ..symval import PredKind

SUPPORTED_VERSION = (0x00, 0x00, 0x00, 0x01)
LONG_FORM = 0x80
LONG_FIXED = 0x7C
LONG_BASE = LONG_FORM | LONG_FIXED
SHORT_BASE = 0x40
LONG_HDR_LEN = 10
SHORT_HDR_LEN = 6
TAG_LEN = 4
RESERVED_MASK, RESERVED_NIBBLE = 0x0F, 0x0A

FIN_BIT = 0x80

F_PADDING, F_PING, F_ACK, F_HANDSHAKE, F_STREAM, F_CLOSE, F_RESET = 0, 1, 2, 3, 4, 6, 7

SITE_FORM = define_site("hdr.long_form")
SITE_FIXED = define_site("hdr.long_fixed")
SITE_TYPE_HI = define_site("hdr.type_hi")
SITE_TYPE_LO = define_site("hdr.type_lo")
SITE_SHORT = define_site("hdr.short_fixed")


class PacketType(enum.IntEnum):
    INITIAL = 0
    HANDSHAKE = 1
    VERSION_NEGOTIATION = 2
    INVALID = 3
    SHORT = 4


class ParseReject(Exception):
    """Malformed packet; receivers drop it without faulting."""


@dataclass(frozen=True)
class Padding:
    length: int = 1


@dataclass(frozen=True)
class Ping:
    pass


@dataclass(frozen=True)
class Ack:
    largest: PayloadByte


@dataclass(frozen=True)
class Handshake:
    stage: int


@dataclass(frozen=True)
class Stream:
    stream_id: int
    offset: int
    data: Tuple[int, ...] = ()
    fin: bool = False


@dataclass(frozen=True)
class Close:
    code: int


@dataclass(frozen=True)
class ResetStream:
    stream_id: int
    code: int


Frame = Union[Padding, Ping, Ack, Handshake, Stream, Close, ResetStream]


@dataclass(frozen=True)
class Packet:
    ptype: PacketType
    cid: Tuple[PayloadByte, ...]
    pn: PayloadByte
    version: Optional[Tuple[PayloadByte, ...]] = None
    frames: Tuple[Frame, ...] = ()
    versions: Tuple[Tuple[int, ...], ...] = ()  # VersionNegotiation body

    @property
    def is_long(self) -> bool:
        return self.ptype is not PacketType.SHORT

    @property
    def ack_eliciting(self) -> bool:
        return any(not isinstance(f, (Ack, Padding)) for f in self.frames)


@dataclass(frozen=True)
class Header:
    ptype: PacketType
    cid: Tuple[PayloadByte, ...]
    pn: PayloadByte
    version: Optional[Tuple[PayloadByte, ...]]
    length: int


def encode_frames(frames: Sequence[Frame]) -> List[PayloadByte]:
    out: List[PayloadByte] = []
    for f in frames:
        if isinstance(f, Padding):
            out.extend([F_PADDING] * f.length)
        elif isinstance(f, Ping):
            out.append(F_PING)
        elif isinstance(f, Ack):
            out += [F_ACK, f.largest]
        elif isinstance(f, Handshake):
            out += [F_HANDSHAKE, f.stage]
        elif isinstance(f, Stream):
            sid = f.stream_id | (FIN_BIT if f.fin else 0)
            out += [F_STREAM, sid, f.offset, len(f.data), *f.data]
        elif isinstance(f, Close):
            out += [F_CLOSE, f.code]
        elif isinstance(f, ResetStream):
            out += [F_RESET, f.stream_id, f.code]
        else:
            raise TypeError(f"not a frame: {f!r}")
    return out


def encode_packet(pkt: Packet, ctx: Optional[PathContext] = None) -> Tuple[PayloadByte, ...]:
    if pkt.ptype is PacketType.SHORT:
        header = [SHORT_BASE, *pkt.cid, pkt.pn]
    else:
        header = [LONG_BASE | int(pkt.ptype), *pkt.version, *pkt.cid, pkt.pn]
    if pkt.ptype is PacketType.VERSION_NEGOTIATION:
        body = [b for v in pkt.versions for b in v]
    else:
        body = encode_frames(pkt.frames)
    return tuple(header) + seal(body, ctx)


def _bit(ctx: Optional[PathContext], site: str, b: PayloadByte, mask: int, want: int) -> bool:
    if ctx is None:
        if isinstance(b, Sym):
            raise ParseReject("symbolic byte without a path context")
        return b & mask == want
    return ctx.test(site, b, PredKind.MASK_EQ, want, mask)


def parse_header(payload: Sequence[PayloadByte], ctx: Optional[PathContext] = None) -> Header:
    """Classify byte0 bit by bit; may fork on symbolic header bytes.

    Type slot 3 is reported as ``PacketType.INVALID``; rejecting it is the caller's job.
    """
    if not payload:
        raise ParseReject("empty datagram")
    b0 = payload[0]
    if _bit(ctx, SITE_FORM, b0, LONG_FORM, LONG_FORM):
        if len(payload) < LONG_HDR_LEN + TAG_LEN:
            raise ParseReject("truncated long header")
        if not _bit(ctx, SITE_FIXED, b0, LONG_FIXED, LONG_FIXED):
            raise ParseReject("long header fixed bits clear")
        if _bit(ctx, SITE_TYPE_HI, b0, 0x02, 0x02):
            ptype = 3 if _bit(ctx, SITE_TYPE_LO, b0, 0x01, 0x01) else 2
        else:
            ptype = 1 if _bit(ctx, SITE_TYPE_LO, b0, 0x01, 0x01) else 0
        return Header(PacketType(ptype), tuple(payload[5:9]), payload[9],
                      tuple(payload[1:5]), LONG_HDR_LEN)
    if not _bit(ctx, SITE_SHORT, b0, SHORT_BASE, SHORT_BASE):
        raise ParseReject("short header fixed bit clear")
    if len(payload) < SHORT_HDR_LEN + TAG_LEN:
        raise ParseReject("truncated short header")
    return Header(PacketType.SHORT, tuple(payload[1:5]), payload[5], None, SHORT_HDR_LEN)


def parse_frames(body: Sequence[int]) -> Tuple[Frame, ...]:
    frames: List[Frame] = []
    i, n = 0, len(body)

    def need(k: int) -> None:
        if i + k > n:
            raise ParseReject("truncated frame")

    while i < n:
        t = body[i]
        i += 1
        if t == F_PADDING:
            j = i
            while j < n and body[j] == F_PADDING:
                j += 1
            frames.append(Padding(j - i + 1))
            i = j
        elif t == F_PING:
            frames.append(Ping())
        elif t == F_ACK:
            need(1)
            frames.append(Ack(body[i]))
            i += 1
        elif t == F_HANDSHAKE:
            need(1)
            frames.append(Handshake(body[i]))
            i += 1
        elif t == F_STREAM:
            need(3)
            sid, off, length = body[i], body[i + 1], body[i + 2]
            i += 3
            need(length)
            frames.append(Stream(sid & ~FIN_BIT & 0xFF, off, tuple(body[i:i + length]),
                                 bool(sid & FIN_BIT)))
            i += length
        elif t == F_CLOSE:
            need(1)
            frames.append(Close(body[i]))
            i += 1
        elif t == F_RESET:
            need(2)
            frames.append(ResetStream(body[i], body[i + 1]))
            i += 2
        else:
            raise ParseReject(f"unknown frame type {t:#04x}")
    return tuple(frames)


def parse_body(hdr: Header, body: Sequence[int]) -> Packet:
    if hdr.ptype is PacketType.VERSION_NEGOTIATION:
        if len(body) % 4:
            raise ParseReject("ragged version list")
        versions = tuple(tuple(body[i:i + 4]) for i in range(0, len(body), 4))
        return Packet(hdr.ptype, hdr.cid, hdr.pn, hdr.version, (), versions)
    return Packet(hdr.ptype, hdr.cid, hdr.pn, hdr.version, parse_frames(body))


def decode_packet(payload: Sequence[PayloadByte], ctx: Optional[PathContext] = None) -> Packet:
    """Guarded generic decoder: header, type guard, integrity check, frames."""
    hdr = parse_header(payload, ctx)
    if hdr.ptype is PacketType.INVALID:
        raise ParseReject("unassigned long header type")
    try:
        body = open_sealed(payload[hdr.length:], ctx)
    except IntegrityError as e:
        raise ParseReject(str(e)) from e
    return parse_body(hdr, body)


# -- byte-wise comparisons over possibly symbolic bytes -----------------------

def byte_eq(ctx: Optional[PathContext], site: str, a: PayloadByte, b: PayloadByte) -> bool:
    if isinstance(a, Sym) and isinstance(b, Sym):
        # unary constraint language: pin one side, compare the other against it
        b = ctx.concrete(b)
    if isinstance(b, Sym):
        a, b = b, a
    if not isinstance(a, Sym):
        return a == b
    return ctx.test(site, a, PredKind.EQ, b)


def bytes_eq(ctx: Optional[PathContext], site: str, a: Sequence[PayloadByte],
             b: Sequence[PayloadByte]) -> bool:
    """Compare field by field, stopping at the first unequal byte."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if not byte_eq(ctx, site, x, y):
            return False
    return True


def is_reserved_version(ctx: Optional[PathContext], site: str,
                        version: Sequence[PayloadByte]) -> bool:
    """True iff every byte has low nibble 0xa (the 0x?a?a?a?a negotiation pattern)."""
    for b in version:
        if isinstance(b, Sym):
            ok = ctx.test(site, b, PredKind.MASK_EQ, RESERVED_NIBBLE, RESERVED_MASK)
        else:
            ok = b & RESERVED_MASK == RESERVED_NIBBLE
        if not ok:
            return False
    return True
