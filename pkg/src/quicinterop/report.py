"""Rendering of run statistics and persistence of test cases."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, List

from .explore.engine import RunReport, RunStats

COLUMNS = ("Config", "Steps/s", "Time", "PCov[%]", "BCov[%]", "TDomain[%]", "MaxStates",
           "Unique errors")


def _fmt_time(seconds: float) -> str:
    m, s = divmod(seconds, 60)
    return f"{int(m)}:{s:05.2f}"


def table_row(name: str, s: RunStats) -> List[str]:
    return [name, f"{s.steps_per_second:,.0f}", _fmt_time(s.wall_time), f"{s.probe_coverage_pct:.2f}",
            f"{s.branch_coverage_pct:.2f}", f"{s.domain_time_pct:.2f}", str(s.max_live_states),
            str(s.unique_errors)]


def render_table(rows: Iterable[List[str]]) -> str:
    rows = [list(COLUMNS)] + [list(r) for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
    lines = []
    for n, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_report(name: str, report: RunReport) -> str:
    s = report.stats
    text = render_table([table_row(name, s)])
    text += (f"\npaths: {s.paths_total} total, {s.paths_ok} ok, {s.paths_error} error, "
             f"{s.paths_limit} limit; {s.steps_total} steps; {s.concretizations} concretizations\n")
    if report.errors:
        text += "\nunique errors:\n"
        for i, (sig, _) in enumerate(report.errors, 1):
            text += f"  e{i}: {sig}\n"
    return text


def stats_dict(s: RunStats) -> dict:
    return asdict(s)


def write_outputs(out_dir, name: str, report: RunReport, emit_all: bool = False) -> Path:
    out = Path(out_dir)
    (out / "errors").mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(render_report(name, report))
    (out / "stats.json").write_text(json.dumps(stats_dict(report.stats), indent=1, sort_keys=True) + "\n")
    for i, (_, tc) in enumerate(report.errors, 1):
        (out / "errors" / f"e{i}.json").write_text(tc.dumps() + "\n")
    if emit_all:
        cases = out / "cases"
        cases.mkdir(exist_ok=True)
        for i, tc in enumerate(report.all_test_cases, 1):
            (cases / f"c{i:06d}.json").write_text(tc.dumps() + "\n")
    return out
