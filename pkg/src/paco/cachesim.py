"""Countable model of p private LRU caches over a shared memory.

Each simulated worker owns one :class:`CacheState`; states never interact,
so per-worker miss counts are independent of the other workers' activity.
Transfers happen in whole lines. A task starts cold and flushes everything
when it finishes (see :meth:`CacheState.end_task`).

Addresses are (array id, element index) pairs; every named array lives in
its own line-id namespace, so layout padding never aliases across arrays.
"""

from __future__ import annotations

import io
from dataclasses import dataclass


@dataclass(frozen=True)
class CacheConfig:
    """Capacity ``Z`` and line size ``L``, both in elements."""

    capacity: int
    line: int
    policy: str = "lru"

    def __post_init__(self) -> None:
        if self.line < 1:
            raise ValueError(f"line size must be >= 1, got {self.line}")
        if self.capacity < self.line:
            raise ValueError(f"capacity {self.capacity} smaller than line {self.line}")
        if self.capacity % self.line:
            raise ValueError(f"capacity {self.capacity} not a multiple of line {self.line}")
        if self.policy != "lru":
            raise ValueError(f"unsupported replacement policy {self.policy!r}")

    @property
    def n_lines(self) -> int:
        return self.capacity // self.line


class CacheState:
    """One private cache: resident line set with LRU recency and counters.

    Writes allocate like reads; evicting or flushing a dirty line bumps the
    writeback counter. ``trace``, when set to a list, records every access
    run for replay through an independent reference simulator.
    """

    __slots__ = ("cfg", "_lines", "_cap", "_line", "misses", "writebacks", "_mark", "trace")

    def __init__(self, cfg: CacheConfig, trace: list | None = None):
        self.cfg = cfg
        self._lines: dict[tuple[int, int], bool] = {}  # line id -> dirty, LRU first
        self._cap = cfg.n_lines
        self._line = cfg.line
        self.misses = 0
        self.writebacks = 0
        self._mark = 0
        self.trace = trace

    def touch(self, array: int, index: int, is_write: bool = False) -> None:
        """Access one element; total function, misses/evicts as needed."""
        self.access_run(array, index, 1, is_write)

    def access_run(self, array: int, start: int, count: int, is_write: bool = False) -> None:
        """Access ``count`` consecutive elements of ``array`` from ``start``."""
        if start < 0 or count < 1:
            raise ValueError(f"bad access run start={start} count={count}")
        if self.trace is not None:
            self.trace.append((array, start, count, is_write))
        lines = self._lines
        L = self._line
        for ln in range(start // L, (start + count - 1) // L + 1):
            key = (array, ln)
            if key in lines:
                dirty = lines.pop(key)
                lines[key] = dirty or is_write
            else:
                self.misses += 1
                if len(lines) >= self._cap:
                    old_key = next(iter(lines))
                    if lines.pop(old_key):
                        self.writebacks += 1
                lines[key] = is_write

    def end_task(self) -> tuple[int, int]:
        """Report misses accrued since the last task boundary, then flush.

        Flushing empties residency (the next task starts cold) and writes
        back every dirty line.
        """
        for dirty in self._lines.values():
            if dirty:
                self.writebacks += 1
        self._lines.clear()
        since = self.misses - self._mark
        self._mark = self.misses
        return since, self.writebacks

    @property
    def resident_lines(self) -> int:
        return len(self._lines)


def replay_misses(cfg: CacheConfig, trace: list[tuple[int, int, int, bool]]) -> int:
    """Replay a recorded access trace element by element through a fresh LRU.

    Kept deliberately simple and separate from :class:`CacheState` so tests
    can cross-check the two implementations against each other.
    """
    cap = cfg.n_lines
    last_use: dict[tuple[int, int], int] = {}
    clock = 0
    misses = 0
    for array, start, count, _w in trace:
        for idx in range(start, start + count):
            clock += 1
            key = (array, idx // cfg.line)
            if key not in last_use:
                misses += 1
                if len(last_use) >= cap:
                    oldest = min(last_use, key=last_use.get)
                    del last_use[oldest]
            last_use[key] = clock
    return misses


def miss_csv(rows: list[tuple[int, int, int, int]]) -> str:
    """Render per-task miss rows as ``task_id,worker,misses,writebacks``."""
    buf = io.StringIO()
    buf.write("task_id,worker,misses,writebacks\n")
    for task_id, worker, misses, writebacks in rows:
        buf.write(f"{task_id},{worker},{misses},{writebacks}\n")
    return buf.getvalue()
