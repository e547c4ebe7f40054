"""DiffServ classification, CoDel, FQ-CoDel and the strict-priority band scheduler."""

from __future__ import annotations

import enum
import math
import struct
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Optional

from .engine import MS


class Band(enum.IntEnum):
    EF = 0
    AF = 1
    BE = 2


class Dscp(enum.Enum):
    CS6 = 48
    CS5 = 40
    CS4 = 32
    CS3 = 24
    CS2 = 16
    CS1 = 8

    @property
    def band(self) -> Band:
        return DSCP_BANDS[self]


DSCP_BANDS = {
    Dscp.CS6: Band.EF,
    Dscp.CS5: Band.EF,
    Dscp.CS4: Band.AF,
    Dscp.CS3: Band.AF,
    Dscp.CS2: Band.BE,
    Dscp.CS1: Band.BE,
}


def parse_dscp(name: str) -> Dscp:
    try:
        return Dscp[name.strip().upper()]
    except KeyError:
        raise ValueError(f"unknown DSCP code point {name!r}") from None


class FlowKey(NamedTuple):
    src: int
    dst: int
    sport: int
    dport: int
    proto: int = 17


class Packet:
    __slots__ = (
        "uid",
        "flow",
        "stats",
        "dscp",
        "band",
        "size",
        "created_at",
        "enqueued_at",
        "dst",
        "next_hop",
    )

    def __init__(self, uid, flow, dscp, size, created_at, dst, stats=None):
        self.uid = uid
        self.flow = flow
        self.stats = stats
        self.dscp = dscp
        self.band = DSCP_BANDS[dscp]
        self.size = size
        self.created_at = created_at
        self.enqueued_at = created_at
        self.dst = dst
        self.next_hop = None

    def __repr__(self) -> str:
        return f"Packet(uid={self.uid}, flow={tuple(self.flow)}, size={self.size})"


def classify(pkt: Packet) -> Band:
    return DSCP_BANDS[pkt.dscp]


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
# src node u32, dst node u32, src port u16, dst port u16, protocol u8
_KEY_LAYOUT = struct.Struct(">IIHHB")


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def flow_key_bytes(key: FlowKey) -> bytes:
    return _KEY_LAYOUT.pack(key.src, key.dst, key.sport, key.dport, key.proto)


def hash_flow(key: FlowKey, perturbation: int = 0, n_queues: int = 1024) -> int:
    return (fnv1a64(flow_key_bytes(key)) ^ perturbation) % n_queues


@dataclass(frozen=True)
class CodelParams:
    target: int = 5 * MS
    interval: int = 100 * MS
    mtu: int = 1514

    def __post_init__(self) -> None:
        if not 0 < self.target < self.interval:
            raise ValueError("CoDel needs 0 < target < interval")


@dataclass
class CodelState:
    count: int = 0
    last_count: int = 0
    dropping: bool = False
    first_above_time: Optional[int] = None
    drop_next: int = 0


def control_law(t: int, count: int, interval: int) -> int:
    return t + int(interval / math.sqrt(count))


def codel_decide(
    state: CodelState,
    sojourn: int,
    now: int,
    params: CodelParams,
    backlog_bytes: Optional[int] = None,
) -> tuple[bool, CodelState]:
    """Decide whether the packet at the head of a queue is dropped.

    ``backlog_bytes`` is what the owning instance still holds once the packet
    is removed; at or below one MTU the queue counts as draining and is never
    dropped from. The state is
    updated in place and returned alongside the verdict (True = drop).
    """
    if sojourn < params.target or (
        backlog_bytes is not None and backlog_bytes <= params.mtu
    ):
        state.first_above_time = None
        ok_to_drop = False
    elif state.first_above_time is None:
        state.first_above_time = now + params.interval
        ok_to_drop = False
    else:
        ok_to_drop = now >= state.first_above_time

    if state.dropping:
        if not ok_to_drop:
            state.dropping = False
            state.last_count = state.count
            return False, state
        if now >= state.drop_next:
            state.count += 1
            state.drop_next = control_law(state.drop_next, state.count, params.interval)
            return True, state
        return False, state

    if ok_to_drop:
        state.dropping = True
        if now - state.drop_next < 16 * params.interval:
            state.count = max(state.last_count - 2, 1)
        else:
            state.count = 1
        state.drop_next = control_law(now, state.count, params.interval)
        return True, state
    return False, state


class _SubQueue:
    __slots__ = ("index", "packets", "bytes", "deficit", "codel", "where")

    NONE, NEW, OLD = 0, 1, 2

    def __init__(self, index: int) -> None:
        self.index = index
        self.packets: deque[Packet] = deque()
        self.bytes = 0
        self.deficit = 0
        self.codel = CodelState()
        self.where = _SubQueue.NONE


DropHook = Callable[[Packet, str], None]


class FqCodel:
    """One FQ-CoDel instance: hashed sub-queues served by DRR, CoDel per sub-queue.

    Drops are reported through ``on_drop(pkt, reason)`` with reason
    ``"codel"`` or ``"fq_overflow"``.
    """

    def __init__(
        self,
        params: CodelParams | None = None,
        quantum: int = 1514,
        n_queues: int = 1024,
        limit: int = 1000,
        perturbation: int = 0,
        on_drop: DropHook | None = None,
    ) -> None:
        if quantum <= 0 or n_queues <= 0 or limit <= 0:
            raise ValueError("quantum, n_queues and limit must be positive")
        self.params = params or CodelParams()
        self.quantum = quantum
        self.n_queues = n_queues
        self.limit = limit
        self.perturbation = perturbation
        self.on_drop = on_drop
        self.queues: list[Optional[_SubQueue]] = [None] * n_queues
        self.new_flows: deque[_SubQueue] = deque()
        self.old_flows: deque[_SubQueue] = deque()
        self._busy: dict[int, _SubQueue] = {}
        self._index_cache: dict[FlowKey, int] = {}
        self.backlog = 0
        self.backlog_bytes = 0
        self.enqueued = 0
        self.dequeued = 0
        self.codel_drops = 0
        self.overflow_drops = 0

    def __len__(self) -> int:
        return self.backlog

    def index_of(self, key: FlowKey) -> int:
        idx = self._index_cache.get(key)
        if idx is None:
            idx = hash_flow(key, self.perturbation, self.n_queues)
            self._index_cache[key] = idx
        return idx

    def queue(self, index: int) -> _SubQueue:
        q = self.queues[index]
        if q is None:
            q = self.queues[index] = _SubQueue(index)
        return q

    def packets(self) -> Iterator[Packet]:
        for q in self._busy.values():
            yield from q.packets

    def enqueue(self, pkt: Packet, now: int) -> bool:
        """Buffer ``pkt``; returns False only if ``pkt`` itself was dropped."""
        q = self.queue(self.index_of(pkt.flow))
        pkt.enqueued_at = now
        q.packets.append(pkt)
        q.bytes += pkt.size
        self._busy[q.index] = q
        self.backlog += 1
        self.backlog_bytes += pkt.size
        self.enqueued += 1
        if q.where == _SubQueue.NONE:
            q.where = _SubQueue.NEW
            q.deficit = self.quantum
            self.new_flows.append(q)
        accepted = True
        while self.backlog > self.limit:
            victim = self._drop_from_fattest()
            if victim is pkt:
                accepted = False
        return accepted

    def _drop_from_fattest(self) -> Packet:
        fat = max(self._busy.values(), key=lambda q: (len(q.packets), -q.index))
        victim = fat.packets.popleft()
        self._took(fat, victim)
        self.overflow_drops += 1
        if self.on_drop is not None:
            self.on_drop(victim, "fq_overflow")
        return victim

    def _took(self, q: _SubQueue, pkt: Packet) -> None:
        q.bytes -= pkt.size
        self.backlog -= 1
        self.backlog_bytes -= pkt.size
        if not q.packets:
            del self._busy[q.index]

    def _codel_dequeue(self, q: _SubQueue, now: int) -> Optional[Packet]:
        params = self.params
        while q.packets:
            pkt = q.packets.popleft()
            self._took(q, pkt)
            drop, _ = codel_decide(q.codel, now - pkt.enqueued_at, now, params, self.backlog_bytes)
            if not drop:
                return pkt
            self.codel_drops += 1
            if self.on_drop is not None:
                self.on_drop(pkt, "codel")
        # an empty queue always leaves the dropping state
        q.codel.first_above_time = None
        if q.codel.dropping:
            q.codel.dropping = False
            q.codel.last_count = q.codel.count
        return None

    def dequeue(self, now: int) -> Optional[Packet]:
        new_flows, old_flows = self.new_flows, self.old_flows
        while True:
            if new_flows:
                head = new_flows
            elif old_flows:
                head = old_flows
            else:
                return None
            q = head[0]
            if q.deficit <= 0:
                q.deficit += self.quantum
                head.popleft()
                q.where = _SubQueue.OLD
                old_flows.append(q)
                continue
            pkt = self._codel_dequeue(q, now)
            if pkt is None:
                head.popleft()
                if head is new_flows:
                    q.where = _SubQueue.OLD
                    old_flows.append(q)
                else:
                    q.where = _SubQueue.NONE
                continue
            q.deficit -= pkt.size
            self.dequeued += 1
            return pkt


class PriorityScheduler:
    """Strict priority across one FQ-CoDel instance per band (EF, then AF, then BE)."""

    def __init__(self, bands: dict[Band, FqCodel]) -> None:
        self.bands = bands
        self._order = [bands[b] for b in sorted(bands)]

    @classmethod
    def build(cls, on_drop: DropHook | None = None, **fq_kwargs) -> "PriorityScheduler":
        return cls({b: FqCodel(on_drop=on_drop, **fq_kwargs) for b in Band})

    def __len__(self) -> int:
        return sum(len(inst) for inst in self._order)

    def packets(self) -> Iterator[Packet]:
        for inst in self._order:
            yield from inst.packets()

    def enqueue(self, pkt: Packet, now: int) -> bool:
        return self.bands[pkt.band].enqueue(pkt, now)

    def dequeue(self, now: int) -> Optional[Packet]:
        for inst in self._order:
            if inst.backlog:
                pkt = inst.dequeue(now)
                if pkt is not None:
                    return pkt
        return None


def prio_dequeue(sched: PriorityScheduler, now: int) -> Optional[Packet]:
    return sched.dequeue(now)


def fq_enqueue(inst: FqCodel, pkt: Packet, now: int) -> bool:
    return inst.enqueue(pkt, now)


def fq_dequeue(inst: FqCodel, now: int) -> Optional[Packet]:
    return inst.dequeue(now)
