"""Gradient-oracle call accounting."""

from __future__ import annotations

from typing import Iterable


class GradientCounter:
    """Monotone count of gradient-oracle evaluations.

    Threads never share a counter: each worker takes a :meth:`shard` and the
    shards are folded back with :meth:`merge` once the work is done.
    """

    __slots__ = ("_total",)

    def __init__(self, total: int = 0):
        if total < 0:
            raise ValueError("counter total must be nonnegative")
        self._total = int(total)

    @property
    def total(self) -> int:
        return self._total

    def increment(self, calls: int = 1) -> None:
        if calls < 0:
            raise ValueError("gradient counts only go up")
        self._total += int(calls)

    def shard(self) -> "GradientCounter":
        return GradientCounter()

    def merge(self, shards: Iterable["GradientCounter"]) -> None:
        for s in shards:
            self.increment(s.total)

    def __repr__(self) -> str:
        return f"GradientCounter(total={self._total})"
