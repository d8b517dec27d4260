import random

import pytest

from radnetve.core import GeoPosition, NodePrefix, RMessage, VeMessage, encode_header
from radnetve.radio import PROFILES, Frame, Medium
from radnetve.rp import Action, RpNode
from radnetve.rvep import MAX_FORWARD_DELAY, VeNode, forwarding_delay
from radnetve.simkernel import Kernel, seconds

import oracles
from bench import StaticHost, line_topology

A = NodePrefix((1, 2, 3, 4, 5, 6, 7, 1))
B = NodePrefix((1, 0, 0, 0, 0, 0, 0, 0))  # shares one field with A
C = NodePrefix((2, 3, 4, 5, 6, 7, 1, 2))  # shares nothing with A


class Log:
    def __init__(self):
        self.drops = []
        self.delivered = []
        self.forwards = []

    def drop(self, t, nid, key, reason):
        self.drops.append(reason)

    def app_deliver(self, t, nid, key):
        self.delivered.append(nid)

    def forward(self, t, nid, key, hop):
        self.forwards.append((t, nid))


def _rp(prefix=B, interests=(), **kw):
    k = Kernel(0)
    m = Medium(k, PROFILES["80211n"], k.streams["mac"], collisions=False)
    m.add_node(0, 0)
    log = Log()
    node = RpNode(StaticHost(0, (0, 0), (1,)), prefix, m, log=log, **kw)
    for i in interests:
        node.register_interest(i)
    return k, m, node, log


def _rmsg(mid=0, src=A, interest=3, hop_limit=5, dest=None):
    return Frame(RMessage(mid, src, interest, hop_limit, dest, b"p"), 8 * 22, 1, key=mid)


def test_action_combinations():
    assert Action.of(True, True) is Action.DELIVER_FORWARD
    assert Action.of(False, False) is Action.DISCARD


def test_rp_interest_delivers_and_forwards():
    k, m, node, log = _rp(interests=(3,))
    assert node.on_frame(_rmsg()) is Action.DELIVER_FORWARD
    assert log.delivered == [0] and m.stats["tx"] == 0  # queued, not yet on air
    assert node.on_frame(_rmsg()) is Action.DISCARD
    assert log.drops == ["duplicate"]


def test_rp_hop_limit_one_is_not_relayed():
    k, m, node, log = _rp(interests=(3,))
    assert node.on_frame(_rmsg(hop_limit=1)) is Action.DELIVER


def test_rp_unicast_to_other_node_relayed_on_prefix_only():
    k, m, node, _ = _rp(prefix=B)
    assert node.on_frame(_rmsg(dest=C)) is Action.FORWARD
    k, m, node, _ = _rp(prefix=C)
    assert node.on_frame(_rmsg(dest=B)) is Action.DISCARD


def test_rp_unicast_delivered_only_to_destination():
    k, m, node, log = _rp(prefix=C, interests=(3,))
    assert node.on_frame(_rmsg(dest=B)) is Action.FORWARD
    assert node.on_frame(_rmsg(mid=1, dest=C)) is Action.DELIVER_FORWARD


def test_rp_malformed_wire_bytes():
    k, m, node, log = _rp()
    assert node.on_frame(Frame(b"\x01\x02", 16, 1)) is Action.DISCARD
    assert log.drops == ["malformed"]


def test_rp_send_increments_ids():
    k, m, node, _ = _rp()
    assert [node.send(1).message_id for _ in range(3)] == [0, 1, 2]


# -- RVEP ----------------------------------------------------------------------


def test_forwarding_delay_values():
    rng = random.Random(0)
    assert forwarding_delay(0.0, rng) == MAX_FORWARD_DELAY
    assert forwarding_delay(-3.0, rng) == MAX_FORWARD_DELAY
    assert forwarding_delay(100.0, rng, u=0.5) == 0.005
    assert forwarding_delay(10.0, rng, u=0.9) == MAX_FORWARD_DELAY


def test_forwarding_delay_mean_matches_closed_form():
    rng = random.Random(11)
    for d in (5.0, 20.0, 100.0, 400.0):
        draws = [forwarding_delay(d, rng) for _ in range(40000)]
        assert sum(draws) / len(draws) == pytest.approx(oracles.mean_forwarding_delay(d), rel=0.03)


def _ve_net(xs=(0.0, 150.0, 300.0), prefixes=(A, B, B), ttl=5.0):
    net, _ = line_topology()
    k = Kernel(0)
    nodes = []
    m = Medium(k, PROFILES["80211n"], k.streams["mac"], deliver=lambda r, f: nodes[r].on_frame(f), collisions=False)
    log = Log()
    for i, x in enumerate(xs):
        m.add_node(x, 0.0)
        nodes.append(VeNode(StaticHost(i, (x, 0.0), (1,)), prefixes[i], m, net, log=log, pos_ttl=ttl, uniform=lambda: 0.5))
    return k, m, nodes, log


ROADS = {1: (-100.0, 0.0, 1.0, 0.0)}


def _vmsg(mid=0, src=A, x=0.0, direction=0, road=1, hop=0, interest=3, dest=None):
    msg = VeMessage(mid, src, interest, GeoPosition.from_meters(x, 0.0), direction, road, dest, hop, b"")
    return Frame(msg, 8 * 36, 0, key=mid, hop=hop + 1)


def test_first_hop_fills_position_table_and_expires():
    k, m, nodes, _ = _ve_net(ttl=5.0)
    nodes[1].on_frame(_vmsg(x=12.0))
    assert nodes[1].neighbor_positions() == {A: (12.0, 0.0)}
    nodes[1].on_frame(_vmsg(mid=1, x=20.0, hop=2))  # relayed copy: table unchanged
    assert nodes[1].neighbor_positions() == {A: (12.0, 0.0)}
    k.run_until(seconds(5.0) + 1)
    assert nodes[1].neighbor_positions() == {}


def test_wrong_road_is_discarded():
    k, m, nodes, log = _ve_net()
    nodes[1].register_interest(3)
    assert nodes[1].on_frame(_vmsg(road=4)) is Action.DISCARD
    assert log.drops == ["road"]


def test_direction_gate():
    k, m, nodes, log = _ve_net()
    nodes[1].register_interest(3, 5)
    assert nodes[1].on_frame(_vmsg(direction=-1)) is Action.DISCARD  # node 1 is ahead
    assert nodes[1].on_frame(_vmsg(mid=1, direction=1)) is Action.DELIVER_FORWARD


def test_interest_hop_budget():
    k, m, nodes, _ = _ve_net()
    nodes[1].register_interest(3, 2)
    assert nodes[1].on_frame(_vmsg(hop=0)) is Action.DELIVER_FORWARD  # hop 1 < 2
    assert nodes[1].on_frame(_vmsg(mid=1, hop=1)) is Action.DELIVER  # hop 2 reaches the budget


def test_farther_known_neighbor_takes_over():
    k, m, nodes, _ = _ve_net(xs=(0.0, 40.0, 90.0))
    # node 1 knows node 2 sits at 90 m, within half the 200 m range
    nodes[1].on_frame(_vmsg(src=C, mid=7, x=90.0))
    assert nodes[1].on_frame(_vmsg(direction=1)) is Action.DISCARD


def test_forward_waits_and_cancels_on_overhear():
    k, m, nodes, log = _ve_net()
    nodes[1].on_frame(_vmsg(direction=1))
    assert (A, 0) in nodes[1].pending
    ev = nodes[1].pending[(A, 0)]
    assert ev.time == seconds(0.5 / 150.0)
    nodes[1].on_frame(_vmsg(direction=1, hop=1))  # somebody else relayed first
    assert not nodes[1].pending
    assert "suppressed" in log.drops
    k.run_until(seconds(1))
    assert log.forwards == []


def test_overhear_cancel_can_be_disabled():
    k, m, nodes, log = _ve_net()
    nodes[1].cancel_on_overhear = False
    nodes[1].on_frame(_vmsg(direction=1))
    nodes[1].on_frame(_vmsg(direction=1, hop=1))
    k.run_until(seconds(1))
    assert [n for _, n in log.forwards].count(1) == 1


def test_negative_hop_budget_rejected():
    k, m, nodes, _ = _ve_net()
    with pytest.raises(ValueError):
        nodes[0].register_interest(3, -1)


@pytest.mark.parametrize("known", [False, True])
@pytest.mark.parametrize("fresh", [False, True])
@pytest.mark.parametrize("within_half", [False, True])
def test_three_node_line_forwarder_choice(known, fresh, within_half):
    # A at 0 sends towards C; B sits at 60 m, C at 90 m or 150 m (range 200)
    c_x = 90.0 if within_half else 150.0
    k, m, nodes, _ = _ve_net(xs=(0.0, 60.0, c_x), prefixes=(A, B, C))
    b = nodes[1]
    if known:
        b.pos_table[C] = (c_x, 0.0, 0)
    k.run_until(seconds(1.0) if fresh else seconds(6.0))
    action = b.on_frame(_vmsg(direction=1))
    suppressed = known and fresh and within_half
    assert action is (Action.DISCARD if suppressed else Action.FORWARD)
    ref = {
        "prefix": B.fields, "position": (60.0, 0.0), "roads": {1}, "interests": {}, "seen": set(),
        "pos_table": {C.fields: (c_x, 0.0, 0)} if known else {},
    }
    expected, _, _ = oracles.rvep_step(ref, oracles.parse_ve(encode_header(_vmsg(direction=1).msg)), k.now, ROADS, 200.0)
    assert action.value == expected


def test_rp_reaches_sink_three_hops_away():
    from bench import Case, expected_sequences, run_case, simulated_sequences

    case = Case("rp", "line", 200.0, 3, "far", None, hops=5)
    trace = run_case(case)
    expected, _ = expected_sequences(case, trace)
    assert simulated_sequences(case, trace) == expected
    # node 3 sits 450 m from the source: three hops at 150 m spacing
    assert any(nid == 3 for _, nid, _ in trace.delivered)
