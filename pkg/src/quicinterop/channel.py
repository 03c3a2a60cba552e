"""Symbolic channel between the endpoints: per-packet drop forks and symbolic prefixes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

from .explore.context import PathContext
from .netmodel import TAG_LEN, Datagram, SocketTable, UsageError, deliver, reseal
from .probes import define_probes

P_DELIVERED, P_DROPPED, P_MUTATED = define_probes(
    "channel.delivered", "channel.dropped", "channel.mutated")

MAX_PREFIX = 32


@dataclass(frozen=True)
class ChannelConfig:
    """``max_drops=None`` with ``drops=True`` means unbounded symbolic drops."""

    drops: bool = False
    max_drops: Optional[int] = 3
    mod_prefix: int = 0

    def __post_init__(self):
        if not 0 <= self.mod_prefix <= MAX_PREFIX:
            raise UsageError(f"mod_prefix must be within 0..{MAX_PREFIX}")
        if self.max_drops is not None and self.max_drops < 0:
            raise UsageError("max_drops must be non-negative")

    def to_json(self) -> dict:
        return {"drops": self.drops, "max_drops": self.max_drops, "mod_prefix": self.mod_prefix}


@dataclass
class ChannelState:
    drops_taken: int = 0
    # (transmit_index, byte position, variable) for every substituted byte
    mutations: List[Tuple[int, int, int]] = field(default_factory=list)

    @property
    def perturbed(self) -> bool:
        return self.drops_taken > 0 or bool(self.mutations)


def drop_eligible(cfg: ChannelConfig, state: ChannelState) -> bool:
    return cfg.drops and (cfg.max_drops is None or state.drops_taken < cfg.max_drops)


def mutate_prefix(cfg: ChannelConfig, dg: Datagram, ctx: PathContext,
                  state: Optional[ChannelState] = None) -> Datagram:
    k = min(cfg.mod_prefix, len(dg.payload))
    if k == 0:
        return dg
    syms = [ctx.fresh() for _ in range(k)]
    if state is not None:
        state.mutations.extend((dg.transmit_index, i, s.var) for i, s in enumerate(syms))
    ctx.hit(P_MUTATED)
    payload = tuple(syms) + tuple(dg.payload[k:])
    if 0 < dg.sealed_at < k and len(payload) - dg.sealed_at >= TAG_LEN:
        # the corruption happens on the plaintext, before the sender's seal
        payload = reseal(payload, dg.sealed_at, ctx)
    return replace(dg, payload=payload)


def transmit(cfg: ChannelConfig, state: ChannelState, table: SocketTable, dg: Datagram,
             ctx: PathContext) -> Optional[Datagram]:
    """Route one stamped datagram; returns what was enqueued, or None if it was lost."""
    if dg.transmit_index < 0:
        raise UsageError("datagram was not stamped by socket_send")
    if drop_eligible(cfg, state) and ctx.drop_choice(dg.transmit_index):
        state.drops_taken += 1
        ctx.hit(P_DROPPED)
        return None
    out = mutate_prefix(cfg, dg, ctx, state)
    if not deliver(table, out, ctx):
        return None
    ctx.hit(P_DELIVERED)
    return out
