"""Run configurations: the six symbolic-input presets plus limits and output options."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple

from .channel import ChannelConfig
from .explore.engine import BFS, DFS, RANDOM, Limits
from .harness import SYMBOLIC, HarnessParams
from .netmodel import UsageError
from .toyquic import CLIENT, DEFECTS, IMPLS, PICO, QUANT, S3, SCENARIOS, SERVER, applicable_defects

SYM_STREAM, SYM_VERSION, SYM_DROP = "sym-stream", "sym-version", "sym-drop"
MOD_SIZES = (1, 5, 10)
CONFIGS = (SYM_STREAM, SYM_VERSION, SYM_DROP) + tuple(f"sym-mod-{k}" for k in MOD_SIZES)
STRATEGIES = (DFS, BFS, RANDOM)


def mod_prefix_of(config_name: str) -> int:
    return int(config_name.rsplit("-", 1)[1]) if config_name.startswith("sym-mod-") else 0


def split_defects(defects, client_impl: str, server_impl: str) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Arm each defect on every endpoint it applies to; one that fits neither is an error."""
    client, server = [], []
    for d in sorted(set(defects)):
        if d not in DEFECTS:
            raise UsageError(f"unknown defect {d!r} (known: {', '.join(DEFECTS)})")
        on_client = d in applicable_defects(client_impl, CLIENT)
        on_server = d in applicable_defects(server_impl, SERVER)
        if not (on_client or on_server):
            raise UsageError(f"defect {d} applies to neither a {client_impl} client "
                             f"nor a {server_impl} server")
        if on_client:
            client.append(d)
        if on_server:
            server.append(d)
    return tuple(client), tuple(server)


@dataclass(frozen=True)
class RunConfig:
    config_name: str = SYM_STREAM
    defects: FrozenSet[str] = frozenset()
    client_impl: str = PICO
    server_impl: str = QUANT
    scenario: Optional[str] = None  # None keeps the preset's scenario
    strategy: str = DFS
    seed: int = 0
    max_paths: int = 100_000
    max_steps: int = 100_000
    wall_time_s: Optional[float] = None
    max_drops: Optional[int] = 3
    out_dir: Optional[str] = None
    emit_all: bool = False

    def __post_init__(self):
        if self.config_name not in CONFIGS:
            raise UsageError(f"unknown config {self.config_name!r} (choose from {', '.join(CONFIGS)})")
        for impl in (self.client_impl, self.server_impl):
            if impl not in IMPLS:
                raise UsageError(f"unknown implementation {impl!r}")
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {self.strategy!r}")
        if self.scenario is not None:
            if self.config_name == SYM_STREAM:
                raise UsageError("sym-stream selects the scenario symbolically")
            if self.scenario not in SCENARIOS:
                raise UsageError(f"unknown scenario {self.scenario!r}")
        if self.max_paths < 1 or self.max_steps < 1:
            raise UsageError("path and step limits must be positive")
        if self.wall_time_s is not None and self.wall_time_s <= 0:
            raise UsageError("time limit must be positive")
        if self.max_drops is not None and self.max_drops < 0:
            raise UsageError("max_drops must be non-negative")
        split_defects(self.defects, self.client_impl, self.server_impl)

    @property
    def limits(self) -> Limits:
        return Limits(self.max_paths, self.max_steps, self.wall_time_s)

    def harness_params(self) -> HarnessParams:
        client_d, server_d = split_defects(self.defects, self.client_impl, self.server_impl)
        name = self.config_name
        if name == SYM_STREAM:
            scenario, channel = SYMBOLIC, ChannelConfig()
        elif name == SYM_DROP:
            scenario, channel = self.scenario or S3, ChannelConfig(drops=True, max_drops=self.max_drops)
        else:
            scenario, channel = self.scenario or S3, ChannelConfig(mod_prefix=mod_prefix_of(name))
        return HarnessParams(self.client_impl, self.server_impl, scenario, client_d, server_d,
                             channel, sym_version=name == SYM_VERSION)

    def describe(self) -> dict:
        return {"strategy": self.strategy, "seed": self.seed,
                "limits": {"max_paths": self.max_paths, "max_steps_per_path": self.max_steps,
                           "wall_time_s": self.wall_time_s}}
