"""One message on a row of parked nodes: RP floods, RVEP walks one way.

Sixteen nodes sit 40 m apart on a single road with a 200 m radio. Each
protocol sends one message from the westernmost node towards the east and
the script prints who transmitted it and when.

    python3 demos/line_flood_vs_directed.py
"""
from radnetve.core import NodePrefix
from radnetve.radio import PROFILES, Medium
from radnetve.roadnet import RoadNetwork, Segment
from radnetve.rp import RpNode
from radnetve.rvep import VeNode
from radnetve.simkernel import Kernel, seconds, to_seconds

SPACING = 40.0
N = 16
ROADS = RoadNetwork([Segment(1, (-50.0, 0.0), (N * SPACING, 0.0), 20.0)])


class Parked:
    def __init__(self, nid, x):
        self.nid = nid
        self.road_ids = [1]
        self.heading = 1
        self._xy = (x, 0.0)

    def position(self):
        return self._xy


def run(protocol):
    k = Kernel(seed=3)
    nodes = []
    txs = []
    medium = Medium(k, PROFILES["80211n"], k.streams["mac"], deliver=lambda r, f: nodes[r].on_frame(f), collisions=False)
    send = medium.broadcast
    medium.broadcast = lambda s, f: txs.append((k.now, s)) or send(s, f)
    for i in range(N):
        medium.add_node(i * SPACING, 0.0)
        host = Parked(i, i * SPACING)
        prefix = NodePrefix(((i % 7) + 1,) * 8)
        if protocol == "rp":
            node = RpNode(host, prefix, medium, hop_limit=20)
        else:
            node = VeNode(host, prefix, medium, ROADS)
        node.register_interest(1, 20)
        nodes.append(node)
    if protocol == "rvep":
        # hellos let every node learn where its neighbours are
        for i, node in enumerate(nodes):
            k.schedule(seconds(0.05 * (i + 1)), node.send, 2, b"", None, 0, 1)
        k.run_until(seconds(2.0))
        txs.clear()
        nodes[0].send(1, b"warn", None, 1, 1)
    else:
        nodes[0].send(1, b"warn")
    k.run_until(k.now + seconds(1.0))
    return txs


if __name__ == "__main__":
    for proto in ("rp", "rvep"):
        txs = run(proto)
        start = txs[0][0]
        hops = ", ".join(f"n{s}@{1e3 * to_seconds(t - start):.2f}ms" for t, s in txs)
        print(f"{proto.upper():5s} {len(txs)} transmissions: {hops}")
