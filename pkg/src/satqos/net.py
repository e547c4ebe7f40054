"""Topology, rate/delay/jitter links, shared Wi-Fi cells, static routing, mobility."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Optional

from .engine import SECOND, Engine, RngStream, derive_stream, to_ticks
from .qos import CodelParams, Packet, PriorityScheduler


class NodeKind(enum.Enum):
    PATIENT = "patient"
    ACCESS_POINT = "ap"
    COMM_HUB = "hub"
    SATELLITE = "satellite"
    GROUND_STATION = "ground"
    MEDICAL_CENTER = "medical_center"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    name: str


class RoutingError(LookupError):
    pass


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def dist2(self, other: "Position") -> float:
        return (self.x - other.x) ** 2 + (self.y - other.y) ** 2


# --------------------------------------------------------------------------- mobility


@dataclass(frozen=True)
class RandomWalk2d:
    bound_x: float = 100.0
    bound_y: float = 100.0
    speed_min: float = 0.5
    speed_max: float = 1.5
    redraw: int = SECOND

    def draw_velocity(self, rng: RngStream) -> tuple[float, float]:
        speed = rng.uniform(self.speed_min, self.speed_max)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        return speed, heading

    def initial(self, rng: RngStream) -> "MobilityState":
        pos = Position(rng.uniform(0.0, self.bound_x), rng.uniform(0.0, self.bound_y))
        speed, heading = self.draw_velocity(rng)
        return MobilityState(pos, speed, heading, next_redraw=self.redraw, time=0)


@dataclass(frozen=True)
class MobilityState:
    position: Position
    speed: float
    heading: float
    next_redraw: int
    time: int = 0


def _fold(c: float, bound: float) -> tuple[float, bool]:
    flipped = False
    while c < 0.0 or c > bound:
        c = -c if c < 0.0 else 2.0 * bound - c
        flipped = not flipped
    return c, flipped


def step_mobility(
    state: MobilityState, dt: int, rng: RngStream, model: RandomWalk2d
) -> MobilityState:
    """Advance one walker by ``dt`` ticks, mirroring off the bounds.

    When the new time reaches ``next_redraw`` a fresh speed and heading are
    drawn for the following leg.
    """
    if dt <= 0:
        raise ValueError("mobility step needs dt > 0")
    dist = state.speed * dt / SECOND
    x = state.position.x + dist * math.cos(state.heading)
    y = state.position.y + dist * math.sin(state.heading)
    x, flip_x = _fold(x, model.bound_x)
    y, flip_y = _fold(y, model.bound_y)
    heading = state.heading
    if flip_x:
        heading = math.pi - heading
    if flip_y:
        heading = -heading
    heading %= 2.0 * math.pi
    time = state.time + dt
    speed, next_redraw = state.speed, state.next_redraw
    if time >= next_redraw:
        speed, heading = model.draw_velocity(rng)
        while next_redraw <= time:
            next_redraw += model.redraw
    return MobilityState(Position(x, y), speed, heading, next_redraw, time)


def associate(patient: Position, aps: list[tuple[int, Position]]) -> int:
    if not aps:
        raise ValueError("no access points to associate with")
    return min(aps, key=lambda ap: (patient.dist2(ap[1]), ap[0]))[0]


def default_ap_positions(n: int, bound_x: float, bound_y: float) -> list[Position]:
    """Evenly spaced along x, alternating between the lower and upper quarter in y."""
    return [
        Position(bound_x * (i + 1) / (n + 1), bound_y * (0.25 if i % 2 == 0 else 0.75))
        for i in range(n)
    ]


# --------------------------------------------------------------------------- routing


class RoutingTable:
    """Shortest paths over the fixed backbone plus a live patient→AP association map."""

    def __init__(self, backbone: dict[int, list[int]], patients: list[int]) -> None:
        self.patients = set(patients)
        self.assoc: dict[int, int] = {}
        self.table: dict[int, dict[int, int]] = {}
        for src in backbone:
            first: dict[int, int] = {}
            frontier = deque()
            for nb in backbone[src]:
                first[nb] = nb
                frontier.append(nb)
            first[src] = src
            while frontier:
                node = frontier.popleft()
                for nb in backbone[node]:
                    if nb not in first:
                        first[nb] = first[node]
                        frontier.append(nb)
            del first[src]
            self.table[src] = first

    def next_hop(self, at: int, dest: int) -> int:
        if at == dest:
            raise RoutingError(f"node {at} is already the destination")
        if at in self.patients:
            try:
                return self.assoc[at]
            except KeyError:
                raise RoutingError(f"patient {at} is not associated") from None
        if dest in self.patients:
            try:
                ap = self.assoc[dest]
            except KeyError:
                raise RoutingError(f"patient {dest} is not associated") from None
            if at == ap:
                return dest
            dest = ap
        try:
            return self.table[at][dest]
        except KeyError:
            raise RoutingError(f"no route from {at} to {dest}") from None


def next_hop(routing: RoutingTable, at: int, dest: int) -> int:
    return routing.next_hop(at, dest)


# --------------------------------------------------------------------------- links


def serialization_ticks(size: int, rate_bps: int) -> int:
    return (size * 8 * SECOND + rate_bps // 2) // rate_bps


class Link:
    """Directed serializer with propagation delay, optional jitter and a queue.

    Without a ``qdisc`` the link is a drop-tail FIFO of ``queue_limit``
    waiting packets whose departures are computed on arrival. With a qdisc,
    the link pulls from it whenever the serializer frees up. Arrivals never
    overtake each other: a jittered delay that would reorder is clamped to
    the previous arrival time.
    """

    def __init__(
        self,
        engine: Engine,
        name: str,
        rate_bps: int,
        delay: int,
        *,
        jitter: Optional[tuple[int, int]] = None,
        rng: Optional[RngStream] = None,
        qdisc: Optional[PriorityScheduler] = None,
        queue_limit: int = 100,
        deliver: Optional[Callable[[Packet, int], None]] = None,
        on_drop: Optional[Callable[[Packet, str], None]] = None,
    ) -> None:
        if rate_bps <= 0:
            raise ValueError(f"{name}: rate must be positive")
        if jitter is not None:
            if jitter[0] > jitter[1]:
                raise ValueError(f"{name}: jitter_low exceeds jitter_high")
            if rng is None:
                raise ValueError(f"{name}: jittered link needs a random stream")
        self.engine = engine
        self.name = name
        self.rate = rate_bps
        self.delay = delay
        self.jitter = jitter
        self.rng = rng
        self.qdisc = qdisc
        self.queue_limit = queue_limit
        self.deliver = deliver
        self.on_drop = on_drop
        self.busy_until = 0
        self.last_arrival = 0
        self.transit: deque[Packet] = deque()
        self._starts: deque[int] = deque()
        self._serving = False
        self.sent = 0

    def sampled_delay(self) -> int:
        if self.jitter is None:
            return self.delay
        lo, hi = self.jitter
        return round(self.rng.uniform(lo, hi))

    def transmit(self, pkt: Packet, now: int) -> int:
        """Put ``pkt`` on the wire; returns its arrival time at the far end."""
        start = self.busy_until if self.busy_until > now else now
        self.busy_until = start + serialization_ticks(pkt.size, self.rate)
        arrival = self.busy_until + self.sampled_delay()
        if arrival < self.last_arrival:
            arrival = self.last_arrival
        self.last_arrival = arrival
        self.sent += 1
        return arrival

    def send(self, pkt: Packet, to: int) -> bool:
        pkt.next_hop = to
        now = self.engine.now
        if self.qdisc is not None:
            accepted = self.qdisc.enqueue(pkt, now)
            if not self._serving:
                self._service()
            return accepted
        starts = self._starts
        while starts and starts[0] <= now:
            starts.popleft()
        if len(starts) >= self.queue_limit:
            if self.on_drop is not None:
                self.on_drop(pkt, "fifo_overflow")
            return False
        if self.busy_until > now:
            starts.append(self.busy_until)
        pkt.enqueued_at = now
        self._launch(pkt, now)
        return True

    def _launch(self, pkt: Packet, now: int) -> None:
        arrival = self.transmit(pkt, now)
        self.transit.append(pkt)
        self.engine.schedule(arrival, self._arrive)

    def _service(self) -> None:
        now = self.engine.now
        pkt = self.qdisc.dequeue(now)
        if pkt is None:
            self._serving = False
            return
        self._serving = True
        self._launch(pkt, now)
        self.engine.schedule(self.busy_until, self._service)

    def _arrive(self) -> None:
        pkt = self.transit.popleft()
        self.deliver(pkt, pkt.next_hop)

    def in_flight(self) -> Iterator[Packet]:
        yield from self.transit
        if self.qdisc is not None:
            yield from self.qdisc.packets()

    def base_delay(self, size: int) -> int:
        prop = self.delay if self.jitter is None else (self.jitter[0] + self.jitter[1]) // 2
        return serialization_ticks(size, self.rate) + prop

    def floor_delay(self, size: int) -> int:
        prop = self.delay if self.jitter is None else self.jitter[0]
        return serialization_ticks(size, self.rate) + prop


def transmit(link: Link, pkt: Packet, now: int) -> int:
    return link.transmit(pkt, now)


# --------------------------------------------------------------------------- network


def mbps_to_bps(mbps) -> int:
    return round(Fraction(str(mbps)) * 1_000_000)


class Network:
    """The built topology for one run.

    ``on_rx(pkt)`` fires when a packet reaches its destination and
    ``on_drop(pkt, reason)`` whenever any queue discards one.
    """

    def __init__(self, engine: Engine, config, on_rx, on_drop) -> None:
        self.engine = engine
        self.config = config
        self.on_rx = on_rx
        self.on_drop = on_drop
        self.nodes: list[Node] = []
        self.links: dict[tuple[int, int], Link] = {}
        self.cells: dict[int, Link] = {}
        self._out: dict[tuple[int, int], Link] = {}
        self.uplink: Optional[Link] = None
        self.mobility: dict[int, MobilityState] = {}
        self._mobility_rng: dict[int, RngStream] = {}
        self.handoffs = 0

    def _add(self, kind: NodeKind, name: str) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, kind, name))
        return nid

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    def _link(self, name: str, src: int, dst: int, qdisc=None, rng_label: str | None = None) -> Link:
        lc = getattr(self.config.links, name)
        jitter = None
        if lc.jitter_high_ms > 0:
            jitter = (to_ticks(lc.jitter_low_ms, "ms"), to_ticks(lc.jitter_high_ms, "ms"))
        link = Link(
            self.engine,
            f"{name}:{self.nodes[src].name}->{self.nodes[dst].name}" if dst >= 0 else name,
            mbps_to_bps(lc.rate_mbps),
            to_ticks(lc.delay_ms, "ms"),
            jitter=jitter,
            rng=derive_stream(self.config.seed, rng_label or f"link.{name}.{src}") if jitter else None,
            qdisc=qdisc,
            queue_limit=lc.queue_limit,
            deliver=self.forward,
            on_drop=self.on_drop,
        )
        return link

    def forward(self, pkt: Packet, at: int) -> None:
        if at == pkt.dst:
            self.on_rx(pkt)
            return
        nh = self.routing.next_hop(at, pkt.dst)
        self._out[(at, nh)].send(pkt, nh)

    def path(self, src: int, dst: int) -> list[Link]:
        hops, at = [], src
        for _ in range(len(self.nodes)):
            if at == dst:
                return hops
            nh = self.routing.next_hop(at, dst)
            hops.append(self._out[(at, nh)])
            at = nh
        raise RoutingError(f"routing loop between {src} and {dst}")

    def base_path_delay(self, src: int, dst: int, size: int) -> int:
        return sum(link.base_delay(size) for link in self.path(src, dst))

    def floor_path_delay(self, src: int, dst: int, size: int) -> int:
        return sum(link.floor_delay(size) for link in self.path(src, dst))

    def in_flight(self) -> Iterator[Packet]:
        seen = set()
        for link in list(self.links.values()) + list(self.cells.values()):
            if id(link) in seen:
                continue
            seen.add(id(link))
            yield from link.in_flight()

    # mobility -----------------------------------------------------------------

    def ap_positions(self) -> list[tuple[int, Position]]:
        return list(zip(self.aps, self._ap_pos))

    def reassociate(self) -> None:
        aps = self.ap_positions()
        for p in self.patients:
            ap = associate(self.mobility[p].position, aps)
            if self.routing.assoc.get(p, ap) != ap:
                self.handoffs += 1
            self.routing.assoc[p] = ap

    def _mobility_tick(self) -> None:
        model = self.walk
        for p in self.patients:
            self.mobility[p] = step_mobility(self.mobility[p], model.redraw, self._mobility_rng[p], model)
        self.reassociate()
        self.engine.schedule_in(model.redraw, self._mobility_tick)

    def start_mobility(self) -> None:
        self.engine.schedule_in(self.walk.redraw, self._mobility_tick)


def build_topology(config, engine: Engine, on_rx=None, on_drop=None) -> Network:
    """Build nodes, links, qdisc and routing for ``config``.

    Node ids: patients first, then APs, hub, satellite, ground station and
    medical center.
    """
    if config.patients < 1:
        raise ValueError("patients must be >= 1")
    if config.aps < 1:
        raise ValueError("aps must be >= 1")
    net = Network(engine, config, on_rx or (lambda pkt: None), on_drop or (lambda pkt, why: None))
    net.patients = [net._add(NodeKind.PATIENT, f"patient{i}") for i in range(config.patients)]
    net.aps = [net._add(NodeKind.ACCESS_POINT, f"ap{i}") for i in range(config.aps)]
    net.hub = net._add(NodeKind.COMM_HUB, "hub")
    net.satellite = net._add(NodeKind.SATELLITE, "satellite")
    net.ground = net._add(NodeKind.GROUND_STATION, "ground")
    net.medical_center = net._add(NodeKind.MEDICAL_CENTER, "medical_center")

    qos = config.qos
    scheduler = PriorityScheduler.build(
        on_drop=net.on_drop,
        params=CodelParams(
            target=to_ticks(qos.codel_target_ms, "ms"),
            interval=to_ticks(qos.codel_interval_ms, "ms"),
            mtu=qos.fq_quantum_bytes,
        ),
        quantum=qos.fq_quantum_bytes,
        n_queues=qos.fq_queues,
        limit=qos.fq_limit,
        perturbation=qos.fq_perturbation,
    )

    hub, sat, ground, mc = net.hub, net.satellite, net.ground, net.medical_center
    pairs = [("uplink", hub, sat), ("sat_hub", sat, hub), ("sat_ground", sat, ground),
             ("ground_sat", ground, sat), ("ground_mc", ground, mc), ("mc_ground", mc, ground)]
    for ap in net.aps:
        pairs += [("ap_hub", ap, hub), ("hub_ap", hub, ap)]
    for name, a, b in pairs:
        qdisc = scheduler if name == "uplink" else None
        link = net._link(name, a, b, qdisc=qdisc, rng_label=f"link.{name}.{a}.{b}")
        net.links[(a, b)] = link
        net._out[(a, b)] = link
    net.uplink = net.links[(hub, sat)]

    for ap in net.aps:
        cell = net._link("wifi", ap, -1, rng_label=f"cell.{ap}")
        cell.name = f"wifi:{net.nodes[ap].name}"
        net.cells[ap] = cell
        for p in net.patients:
            net._out[(p, ap)] = cell
            net._out[(ap, p)] = cell

    backbone: dict[int, list[int]] = {n.id: [] for n in net.nodes if n.kind != NodeKind.PATIENT}
    for a, b in net.links:
        backbone[a].append(b)
    for adj in backbone.values():
        adj.sort()
    net.routing = RoutingTable(backbone, net.patients)

    mob = config.mobility
    net.walk = RandomWalk2d(
        bound_x=mob.bound_x_m,
        bound_y=mob.bound_y_m,
        speed_min=mob.speed_min_mps,
        speed_max=mob.speed_max_mps,
        redraw=to_ticks(mob.redraw_s),
    )
    net._ap_pos = default_ap_positions(config.aps, mob.bound_x_m, mob.bound_y_m)
    for i, p in enumerate(net.patients):
        rng = derive_stream(config.seed, f"mobility.p{i}")
        net._mobility_rng[p] = rng
        net.mobility[p] = net.walk.initial(rng)
    net.reassociate()
    net.handoffs = 0
    return net


__all__ = [
    "Link",
    "MobilityState",
    "Network",
    "Node",
    "NodeKind",
    "Position",
    "RandomWalk2d",
    "RoutingError",
    "RoutingTable",
    "associate",
    "build_topology",
    "default_ap_positions",
    "next_hop",
    "serialization_ticks",
    "step_mobility",
    "transmit",
]
