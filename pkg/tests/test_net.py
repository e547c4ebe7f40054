import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satqos.config import ScenarioConfig
from satqos.engine import MS, SECOND, US, Engine, derive_stream
from satqos.net import (
    Link,
    MobilityState,
    NodeKind,
    Position,
    RandomWalk2d,
    RoutingError,
    associate,
    build_topology,
    default_ap_positions,
    next_hop,
    serialization_ticks,
    step_mobility,
    transmit,
)
from satqos.qos import Dscp, FlowKey, Packet

FAR = 10**18  # a redraw time that never comes


class FixedRng:
    """Replays a list of uniform draws."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)

    def uniform(self, low, high):
        return low + (high - low) * self.random()


def pkt(size=400, uid=0):
    return Packet(uid, FlowKey(0, 1, 1, 1), Dscp.CS6, size, 0, 1)


@pytest.fixture(scope="module")
def net():
    return build_topology(ScenarioConfig(), Engine())


# ------------------------------------------------------------------ topology


def test_default_topology_counts(net):
    kinds = [n.kind for n in net.nodes]
    assert len(net.nodes) == 22
    assert kinds.count(NodeKind.PATIENT) == 15
    assert kinds.count(NodeKind.ACCESS_POINT) == 3
    for k in (NodeKind.COMM_HUB, NodeKind.SATELLITE, NodeKind.GROUND_STATION, NodeKind.MEDICAL_CENTER):
        assert kinds.count(k) == 1


def test_only_uplink_carries_the_qos_engine(net):
    with_qdisc = [link for link in list(net.links.values()) + list(net.cells.values()) if link.qdisc is not None]
    assert with_qdisc == [net.uplink]
    assert net.uplink is net.links[(net.hub, net.satellite)]
    assert net.uplink.rate == 50_000_000


def test_base_path_delay_patient_to_medical_center(net):
    p = net.patients[0]
    links = net.path(p, net.medical_center)
    assert len(links) == 5
    prop = [link.base_delay(0) for link in links]
    assert prop == [1 * MS, 1 * MS, 30 * MS, 10 * MS, 1 * MS]
    assert sum(prop) == 43 * MS
    assert sum(prop[2:]) == 41 * MS


def test_single_patient_topology():
    one = build_topology(ScenarioConfig(patients=1), Engine())
    assert len(one.nodes) == 8
    assert len(one.links) == 6 + 2 * 3


def test_build_rejects_bad_counts():
    with pytest.raises(ValueError, match="patients"):
        build_topology(ScenarioConfig(patients=0), Engine())


# ------------------------------------------------------------------ mobility


def test_straight_step():
    s = MobilityState(Position(50, 50), 1.0, 0.0, next_redraw=FAR)
    s = step_mobility(s, SECOND, derive_stream(0, "m"), RandomWalk2d())
    assert s.position.x == pytest.approx(51.0)
    assert s.position.y == pytest.approx(50.0)


def test_mirror_reflection_at_bound():
    s = MobilityState(Position(99.5, 50), 1.0, 0.0, next_redraw=FAR)
    s = step_mobility(s, SECOND, derive_stream(0, "m"), RandomWalk2d())
    assert s.position.x == pytest.approx(99.5)
    assert s.heading == pytest.approx(math.pi)


def test_redraw_picks_new_velocity_in_range():
    model = RandomWalk2d()
    s = MobilityState(Position(50, 50), 1.0, 0.0, next_redraw=SECOND)
    s = step_mobility(s, SECOND, derive_stream(0, "m"), model)
    assert model.speed_min <= s.speed <= model.speed_max
    assert s.next_redraw == 2 * SECOND


@settings(max_examples=5, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_walk_stays_in_bounds(seed):
    model = RandomWalk2d()
    rng = derive_stream(seed, "mobility.p0")
    s = model.initial(rng)
    for _ in range(10_000):
        s = step_mobility(s, SECOND, rng, model)
        assert 0 <= s.position.x <= 100 and 0 <= s.position.y <= 100
        assert 0.5 <= s.speed <= 1.5


def test_default_ap_positions():
    assert default_ap_positions(3, 100, 100) == [Position(25, 25), Position(50, 75), Position(75, 25)]


def test_associate_nearest():
    aps = list(zip([15, 16, 17], default_ap_positions(3, 100, 100)))
    assert associate(Position(10, 10), aps) == 15


def test_associate_tie_goes_to_lower_id():
    aps = [(7, Position(0, 0)), (3, Position(10, 0))]
    assert associate(Position(5, 0), aps) == 3


def test_associate_single_ap():
    assert associate(Position(99, 99), [(4, Position(0, 0))]) == 4


# ------------------------------------------------------------------ routing


def test_next_hop_examples(net):
    p3 = net.patients[3]
    ap = net.routing.assoc[p3]
    assert next_hop(net.routing, net.hub, net.medical_center) == net.satellite
    assert next_hop(net.routing, p3, net.medical_center) == ap
    assert next_hop(net.routing, net.hub, p3) == ap
    assert next_hop(net.routing, ap, p3) == p3


def test_next_hop_follows_reassociation():
    net = build_topology(ScenarioConfig(), Engine())
    p = net.patients[0]
    other = next(a for a in net.aps if a != net.routing.assoc[p])
    net.routing.assoc[p] = other
    assert next_hop(net.routing, net.hub, p) == other


def test_unroutable_destination_raises(net):
    with pytest.raises(RoutingError):
        next_hop(net.routing, net.hub, 999)


def test_every_pair_resolves_within_six_hops(net):
    for src in range(len(net.nodes)):
        for dst in range(len(net.nodes)):
            if src == dst or (src in net.patients and dst in net.patients):
                continue
            assert len(net.path(src, dst)) <= 6


# ------------------------------------------------------------------ links


def test_serialization_400_bytes_at_50_mbps():
    assert serialization_ticks(400, 50_000_000) == 64 * US


def test_midpoint_jitter_delay():
    link = Link(Engine(), "up", 50_000_000, 30 * MS, jitter=(25 * MS, 35 * MS), rng=FixedRng(0.5))
    assert transmit(link, pkt(), 0) == 30 * MS + 64 * US


def test_reorder_clamp():
    link = Link(Engine(), "up", 50_000_000, 30 * MS, jitter=(25 * MS, 35 * MS), rng=FixedRng(1.0, 0.0))
    a = link.transmit(pkt(), 0)
    b = link.transmit(pkt(), 1 * MS)
    assert a == 35 * MS + 64 * US
    assert b >= a


def test_back_to_back_packets_queue_behind_serializer():
    link = Link(Engine(), "l", 1_000_000, 0)
    assert [link.transmit(pkt(125), 0) for _ in range(3)] == [1 * MS, 2 * MS, 3 * MS]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 2 * MS), st.integers(80, 1500)), min_size=1, max_size=100),
    st.integers(0, 2**32),
)
def test_link_fifo_and_floor(sends, seed):
    link = Link(Engine(), "up", 4_000_000, 30 * MS, jitter=(25 * MS, 35 * MS), rng=derive_stream(seed, "j"))
    now, last = 0, 0
    for gap, size in sends:
        now += gap
        arrival = link.transmit(pkt(size), now)
        assert arrival >= last
        assert arrival - now >= serialization_ticks(size, link.rate) + 25 * MS
        last = arrival


def test_fifo_link_drop_tail_limit():
    drops = []
    eng = Engine()
    link = Link(eng, "l", 1_000_000, 0, queue_limit=2, deliver=lambda p, to: None,
                on_drop=lambda p, why: drops.append(why))
    results = [link.send(pkt(1000, i), 1) for i in range(5)]
    # one on the wire, two waiting, the rest dropped
    assert results == [True, True, True, False, False]
    assert drops == ["fifo_overflow"] * 2


def test_link_rejects_bad_parameters():
    with pytest.raises(ValueError):
        Link(Engine(), "l", 0, 0)
    with pytest.raises(ValueError):
        Link(Engine(), "l", 1, 0, jitter=(2, 1), rng=FixedRng())
