"""Static registry of probe points and branch sites used for coverage proxies.

Modules declare their probes at import time, so the denominators of the
coverage percentages do not depend on which paths happened to run.
"""

PROBES: dict = {}
SITES: dict = {}


def define_probe(name: str) -> str:
    PROBES.setdefault(name, len(PROBES))
    return name


def define_site(name: str) -> str:
    SITES.setdefault(name, len(SITES))
    return name


def define_probes(*names: str):
    return tuple(define_probe(n) for n in names)
