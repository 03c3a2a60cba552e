"""MiniQUIC and its two endpoint implementations."""

from .base import (CLIENT, REQUEST, RESPONSE, S1, S2, S3, SCENARIOS, SERVER, BeliefState, Phase,
                   Progress, StreamBelief, StreamState)
from .pico import PicoEndpoint
from .quant import QuantEndpoint
from .wire import SUPPORTED_VERSION, PacketType, ParseReject, decode_packet, encode_packet

PICO, QUANT = "pico", "quant"
IMPLS = {PICO: PicoEndpoint, QUANT: QuantEndpoint}
DEFECTS = ("D1", "D2", "D3", "D4", "D5")


def applicable_defects(impl: str, role: str) -> frozenset:
    return IMPLS[impl].applicable_defects.get(role, frozenset())


def create_endpoint(impl: str, role: str, scenario: str, defects=(), proposed_version=None):
    """Fresh endpoint in phase Idle.  Inapplicable defects raise ``ValueError``."""
    if impl not in IMPLS:
        raise ValueError(f"unknown implementation {impl!r}")
    return IMPLS[impl](role, scenario, defects, proposed_version)


__all__ = [
    "CLIENT", "SERVER", "S1", "S2", "S3", "SCENARIOS", "REQUEST", "RESPONSE", "SUPPORTED_VERSION",
    "PICO", "QUANT", "IMPLS", "DEFECTS", "BeliefState", "StreamBelief", "Phase", "Progress",
    "StreamState", "PacketType", "ParseReject", "applicable_defects", "create_endpoint",
    "decode_packet", "encode_packet",
]
