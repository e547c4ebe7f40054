"""Discrete-event engine: integer-nanosecond clock, event heap, seeded streams."""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

NS = 1
US = 1_000
MS = 1_000_000
SECOND = 1_000_000_000

_UNITS = {"ns": NS, "us": US, "ms": MS, "s": SECOND}


def to_ticks(value, unit: str = "s") -> int:
    """Convert a duration in ``unit`` to integer nanoseconds.

    The value goes through its decimal text form, so ``0.1`` seconds is
    exactly 100_000_000 ticks rather than whatever the binary float rounds to.
    """
    if isinstance(value, float) and value == float("inf"):
        raise ValueError("infinite duration has no tick representation")
    return round(Fraction(str(value)) * _UNITS[unit])


def ticks_to_seconds(ticks: int) -> float:
    return ticks / SECOND


def ticks_to_ms(ticks: int | float) -> float:
    return ticks / MS


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(frozen=True)
class RunSummary:
    events: int
    clock: int


class Engine:
    """Event queue ordered by ``(fire_at, seq)``.

    Actions are plain callables invoked as ``action(*args)``. Equal fire
    times execute in insertion order.
    """

    def __init__(self) -> None:
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self._pending: set[int] = set()
        self._cancelled: set[int] = set()
        self.processed = 0

    def schedule(self, at: int, action, *args) -> int:
        if at < self.now:
            raise SchedulingError(
                f"event scheduled at t={at} ns while clock is at {self.now} ns"
            )
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (at, seq, action, args))
        self._pending.add(seq)
        return seq

    def schedule_in(self, delay: int, action, *args) -> int:
        return self.schedule(self.now + delay, action, *args)

    def cancel(self, event_id: int) -> str:
        """Cancel a pending event; returns ``"cancelled"`` or ``"already fired"``."""
        if event_id in self._pending:
            self._pending.discard(event_id)
            self._cancelled.add(event_id)
            return "cancelled"
        if event_id in self._cancelled:
            return "cancelled"
        return "already fired"

    def pending(self) -> int:
        return len(self._pending)

    def run_until(self, end: int) -> RunSummary:
        """Execute every event with ``fire_at <= end``; the clock finishes at ``end``."""
        if end < self.now:
            raise SchedulingError(f"horizon {end} ns lies before clock {self.now} ns")
        heap = self._heap
        pop = heapq.heappop
        pending = self._pending
        cancelled = self._cancelled
        count = 0
        while heap and heap[0][0] <= end:
            at, seq, action, args = pop(heap)
            if seq in cancelled:
                cancelled.discard(seq)
                continue
            pending.discard(seq)
            self.now = at
            action(*args)
            count += 1
        self.now = end
        self.processed += count
        return RunSummary(events=count, clock=end)


def _label_words(label: str) -> list[int]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


class RngStream:
    """Named random stream: PCG64 keyed by ``(seed, label)``.

    Uniforms are drawn in blocks; PCG64 yields the same doubles for one block
    of n as for n scalar draws, so blocking does not change the sequence.
    """

    _BLOCK = 1024

    def __init__(self, seed: int, label: str) -> None:
        self.seed = seed
        self.label = label
        entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *_label_words(label)]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self._BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def exponential(self, mean: float) -> float:
        # 1 - u lies in (0, 1], so the log is finite
        return -mean * math.log(1.0 - self.random())


def derive_stream(root_seed: int, label: str) -> RngStream:
    return RngStream(root_seed, label)
