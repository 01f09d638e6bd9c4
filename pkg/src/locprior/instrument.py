"""Operation counters used by the efficiency harness.

Counting is opt-in: operations call :func:`add_macs` / :func:`add_call`,
which are no-ops unless a :class:`Counter` is active via :func:`counting`.
"""
from __future__ import annotations

import contextlib
import contextvars
from collections import Counter as _Tally
from dataclasses import dataclass, field

_ACTIVE: contextvars.ContextVar["Counter | None"] = contextvars.ContextVar("locprior_counter", default=None)


@dataclass
class Counter:
    macs: _Tally = field(default_factory=_Tally)
    calls: _Tally = field(default_factory=_Tally)

    def total(self, *categories: str) -> int:
        if not categories:
            return int(sum(self.macs.values()))
        return int(sum(self.macs[c] for c in categories))


def add_macs(category: str, n: int) -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.macs[category] += int(n)


def add_call(name: str) -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.calls[name] += 1


@contextlib.contextmanager
def counting():
    """Activate a fresh counter for the enclosed block and yield it."""
    counter = Counter()
    token = _ACTIVE.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)
