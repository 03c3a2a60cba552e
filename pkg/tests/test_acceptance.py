"""Acceptance criteria, one test each.

Every criterion prints a ``PASS``/``FAIL`` line (collected into the pytest
terminal summary, or printed directly when this file is run as a script)
and must finish within its time budget.
"""

import sys
import time
from functools import lru_cache

import pytest

from oracles import enumerate_drop_paths, replay_world, snapshot_isolation
from quicinterop import RunConfig, replay, run
from quicinterop.explore.context import Sym
from quicinterop.explore.demo import demo_report, path_constraints
from quicinterop.explore.records import FaultKind, Status
from quicinterop.harness import QuicProgram
from quicinterop.toyquic import S1, S2, S3, SUPPORTED_VERSION, Phase

TIME_BUDGET_S = 60.0
MOD1_PATH_LIMIT = 5000
MOD10_PATH_LIMIT = 2000
EXPECTED_TOTALS = {S1: (0, 0), S2: (15, 0), S3: (15, 1)}  # (request, response) bytes

RESULTS = []


@lru_cache(maxsize=None)
def explore(name, defects=(), **kw):
    return run(RunConfig(name, frozenset(defects), **kw))


# every run whose cases feed the replay and conservation properties
RUNS = [
    ("sym-stream", (), {}),
    ("sym-stream", ("D1", "D2"), {}),
    ("sym-version", ("D3",), {}),
    ("sym-version", (), {}),
    ("sym-drop", ("D4",), {}),
    ("sym-mod-10", ("D5",), {"max_paths": MOD10_PATH_LIMIT}),
    ("sym-mod-1", (), {"max_paths": MOD1_PATH_LIMIT}),
]


def all_cases():
    cases = list(demo_report("dfs").all_test_cases)
    for name, defects, kw in RUNS:
        cases += explore(name, defects, **kw).all_test_cases
    return cases


def c1_demo():
    got = [tuple(path_constraints(tc)) for tc in demo_report("dfs").all_test_cases]
    want = [("x<5",), ("x>=5", "x>=100"), ("x>=5", "x<100")]
    # independent check: the distinct branch outcomes over every byte value
    classes = {(x < 5,) if x < 5 else (False, x >= 100) for x in range(256)}
    ok = sorted(got) == sorted(want) and len(got) == len(classes) == 3
    return ok, f"paths={got}"


def c2_stream():
    clean = explore("sym-stream")
    clean_ok = (clean.stats.paths_total == 3 and not clean.errors
                and all(tc.outcome.status is Status.FINISHED_OK for tc in clean.all_test_cases)
                and {tc.scenario for tc in clean.all_test_cases} == {S1, S2, S3})
    buggy = explore("sym-stream", ("D1", "D2"))
    kinds = sorted(sig.kind.value for sig, _ in buggy.errors)
    divergence_shape = False
    for sig, tc in buggy.errors:
        if sig.kind is FaultKind.INTEROP_DIVERGENCE:
            _, world = replay_world(tc)
            c, s = world.client.belief_state(), world.server.belief_state()
            divergence_shape = (c.phase is Phase.FAILED and c.timeout_flag
                                and s.phase is Phase.CLOSED and not s.timeout_flag)
    ok = clean_ok and kinds == ["InteropDivergence", "LifecycleFault"] and divergence_shape
    return ok, (f"clean: {clean.stats.paths_total} paths, {len(clean.errors)} errors; "
                f"D1+D2: {len(buggy.errors)} unique {kinds}")


def _reserved(version):
    return all(b & 0x0F == 0x0A for b in version)


def _concrete(values, witnesses):
    return tuple(witnesses[v.var] if isinstance(v, Sym) else v for v in values)


def c3_version():
    buggy = explore("sym-version", ("D3",))
    hits = [tuple(tc.witnesses[v] for v in range(4)) for _, tc in buggy.errors]
    found = [v for v in hits if _reserved(v)]
    clean = explore("sym-version")
    completed = retried = 0
    for tc in clean.all_test_cases:
        outcome, world = replay_world(tc)
        c, s = world.client.belief_state(), world.server.belief_state()
        totals = (s.app_bytes_received_total, c.app_bytes_received_total)
        if (outcome.status is Status.FINISHED_OK and c.phase is s.phase is Phase.CLOSED
                and totals == EXPECTED_TOTALS[S3]
                and _concrete(c.version_in_use, tc.witnesses) == SUPPORTED_VERSION):
            completed += 1
            retried += tuple(tc.witnesses[v] for v in range(4)) != SUPPORTED_VERSION
    ok = bool(found) and not clean.errors and completed == len(clean.all_test_cases)
    return ok, (f"D3 witnesses {[bytes(v).hex() for v in found]}; clean: {completed}/"
                f"{len(clean.all_test_cases)} classes completed ({retried} via negotiation)")


def _dropped(tc):
    return frozenset(i for i, d in tc.drop_trace() if d == "Dropped")


def c4_drop():
    report = explore("sym-drop", ("D4",))
    guard = [tc for sig, tc in report.errors
             if sig.kind is FaultKind.GUARD_FAULT and len(_dropped(tc)) >= 2]
    delivered = [tc for tc in report.all_test_cases if not _dropped(tc)]
    engine = {_dropped(tc) for tc in report.all_test_cases if tc.outcome.faults}
    params = RunConfig("sym-drop", frozenset({"D4"})).harness_params()
    oracle = {s for s, outcome in enumerate_drop_paths(params, 3).values() if outcome.faults}
    ok = (bool(guard) and len(delivered) == 1 and not delivered[0].outcome.faults
          and engine == oracle)
    return ok, (f"{report.stats.paths_total} paths; faulting subsets engine="
                f"{sorted(map(sorted, engine))} oracle={sorted(map(sorted, oracle))}")


def c5_mod():
    buggy = explore("sym-mod-10", ("D5",), max_paths=MOD10_PATH_LIMIT)
    first_bytes = []
    for sig, tc in buggy.errors:
        if sig.kind is FaultKind.GUARD_FAULT:
            _, world = replay_world(tc)
            var = next(v for t, pos, v in world.chan.mutations if pos == 0)
            first_bytes.append(tc.witnesses[var])
    clean = explore("sym-mod-1", max_paths=MOD1_PATH_LIMIT)
    guards = [sig for sig, _ in clean.errors if sig.kind is FaultKind.GUARD_FAULT]
    ok = 0xFF in first_bytes and not guards
    return ok, (f"D5 first-byte witnesses {[hex(b) for b in first_bytes]}; sym-mod-1 "
                f"{clean.stats.paths_total} paths, {len(guards)} guard faults")


def c6_replay():
    cases = all_cases()
    bad = sum(replay(tc) != tc.outcome for tc in cases)
    return bad == 0, f"{len(cases) - bad}/{len(cases)} cases reproduced"


def c7_conservation():
    checked = completed = 0
    broken = []
    for tc in all_cases():
        if tc.outcome.status is not Status.FINISHED_OK or tc.scenario not in EXPECTED_TOTALS:
            continue
        _, world = replay_world(tc)
        c, s = world.client.belief_state(), world.server.belief_state()
        pairs = [(c.stream(sid), s.stream(sid)) for sid, _ in c.streams if s.stream(sid)]
        sent_c, sent_s = c.app_bytes_sent_total, s.app_bytes_sent_total
        recv_c, recv_s = c.app_bytes_received_total, s.app_bytes_received_total
        checked += 1
        if c.phase is s.phase is Phase.CLOSED:
            # a completed exchange conserves every byte
            completed += 1
            exact = (all(a.bytes_sent == b.bytes_received and b.bytes_sent == a.bytes_received
                          for a, b in pairs)
                     and (sent_c, sent_s) == (recv_s, recv_c) == EXPECTED_TOTALS[tc.scenario])
            if not exact:
                broken.append(tc)
        elif not (recv_s <= sent_c and recv_c <= sent_s
                  and all(b.bytes_received <= a.bytes_sent and a.bytes_received <= b.bytes_sent
                          for a, b in pairs)):
            broken.append(tc)
    return not broken and completed > 0, (f"{checked} ok paths, {completed} completed transfers, "
                                          f"{len(broken)} violations")


def c8_soundness():
    details, ok = [], True
    for k in (0, 1, 2):
        report = explore("sym-drop", scenario=S1, max_drops=k)
        engine = [tc.drop_trace() for tc in report.all_test_cases]
        params = RunConfig("sym-drop", scenario=S1, max_drops=k).harness_params()
        oracle = enumerate_drop_paths(params, k)
        same_outcomes = all(oracle[tc.drop_trace()][1] == tc.outcome
                            for tc in report.all_test_cases if tc.drop_trace() in oracle)
        ok &= len(engine) == len(set(engine)) and set(engine) == set(oracle) and same_outcomes
        details.append(f"k={k}: {len(engine)}/{len(oracle)}")
    return ok, "; ".join(details)


def c9_snapshots():
    programs = []
    for name, defects in [("sym-drop", ("D4",)), ("sym-stream", ("D1", "D2")),
                          ("sym-version", ("D3",)), ("sym-mod-5", ())]:
        cfg = RunConfig(name, frozenset(defects))
        programs.append(QuicProgram(cfg.harness_params(), name, cfg.describe()))
    checked, changed = snapshot_isolation(programs, forks=1000, seed=0)
    return checked == 1000 and changed == 0, f"{checked} forks, {changed} siblings changed"


CRITERIA = [
    (1, "demo exploration yields exactly three paths", c1_demo),
    (2, "sym-stream path count and D1+D2 errors", c2_stream),
    (3, "sym-version reserved-version witness", c3_version),
    (4, "sym-drop D4 fault set equals brute force", c4_drop),
    (5, "sym-mod first-byte 0xff guard fault", c5_mod),
    (6, "replay determinism", c6_replay),
    (7, "byte conservation", c7_conservation),
    (8, "drop exploration soundness and completeness", c8_soundness),
    (9, "snapshot isolation over 1000 forks", c9_snapshots),
]


def evaluate(number, title, check):
    t0 = time.perf_counter()
    ok, detail = check()
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed <= TIME_BUDGET_S
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({elapsed:.1f}s) {detail}"
    RESULTS.append(line)
    return ok, line


@pytest.mark.parametrize("number, title, check", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_acceptance(number, title, check):
    ok, line = evaluate(number, title, check)
    print(line)
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
