"""Symbolic-execution style interoperability and robustness testing of two toy QUIC stacks."""

from .config import CONFIGS, RunConfig
from .explore import Outcome, TestCase
from .explore.demo import run_branch_demo
from .explore.runner import replay, run

__all__ = ["CONFIGS", "RunConfig", "Outcome", "TestCase", "run", "replay", "run_branch_demo"]
__version__ = "0.1.0"
