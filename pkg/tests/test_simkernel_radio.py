import pytest

from radnetve.radio import PROFILES, Frame, Medium, in_range
from radnetve.simkernel import Kernel, RandomStreams, SchedulingError, seconds, to_seconds


def test_seconds_round_trip():
    assert seconds(1.5) == 1_500_000_000
    assert to_seconds(250_000_000) == 0.25


def test_events_run_in_time_then_insertion_order():
    k = Kernel()
    out = []
    k.schedule(20, out.append, "c")
    k.schedule(10, out.append, "a")
    k.schedule(10, out.append, "b")
    k.run_until(100)
    assert out == ["a", "b", "c"]
    assert k.now == 100


def test_cancelled_events_do_not_fire():
    k = Kernel()
    out = []
    ev = k.schedule(5, out.append, 1)
    k.schedule(6, out.append, 2)
    ev.cancel()
    assert k.pending() == 1
    k.run_until(10)
    assert out == [2]


def test_scheduling_in_the_past_fails():
    k = Kernel()
    k.run_until(50)
    with pytest.raises(SchedulingError):
        k.schedule(49, print)


def test_run_until_is_inclusive_and_resumable():
    k = Kernel()
    out = []
    k.schedule(10, out.append, 1)
    k.schedule(11, out.append, 2)
    k.run_until(10)
    assert out == [1]
    k.run_until(11)
    assert out == [1, 2]


def test_streams_are_independent_and_reproducible():
    a, b = RandomStreams(7), RandomStreams(7)
    x = [a["traffic"].random() for _ in range(3)]
    b["mac"].random()  # drawing elsewhere does not shift traffic
    assert [b["traffic"].random() for _ in range(3)] == x
    assert RandomStreams(8)["traffic"].random() != x[0]


def test_trace_records_events():
    k = Kernel(trace=True)
    k.schedule(3, lambda: None, target=4)
    k.run_until(3)
    assert k.trace[0][0] == 3 and k.trace[0][3] == 4


class FirstSlot:
    """Backoff source that always picks slot 0."""

    def randrange(self, n):
        return 0


def _medium(collisions=True, rng_seed=1, positions=((0, 0), (100, 0), (250, 0)), rng=None):
    k = Kernel(rng_seed)
    got = []
    rng = k.streams["mac"] if rng is None else rng
    m = Medium(k, PROFILES["80211n"], rng, deliver=lambda r, f: got.append((k.now, r, f.msg)), collisions=collisions)
    for x, y in positions:
        m.add_node(x, y)
    return k, m, got


def test_unit_disk_reception():
    k, m, got = _medium()
    m.broadcast(0, Frame("hello", 800, 0))
    k.run_until(seconds(1))
    assert [r for _, r, _ in got] == [1]  # node 2 is 250 m away, beyond 200 m


def test_airtime_and_latency():
    k, m, got = _medium()
    prof = m.profile
    m.broadcast(0, Frame("x", 800, 0))
    k.run_until(seconds(1))
    t = got[0][0]
    air = prof.airtime(800)
    # DIFS + k slots + airtime
    slots = (t - seconds(prof.difs) - round(air * 1e9)) / seconds(prof.slot)
    assert abs(slots - round(slots)) < 1e-6 and 0 <= round(slots) < prof.contention_window


def test_hidden_terminal_collision():
    # 0 and 2 cannot hear each other but both reach 1
    k, m, got = _medium(positions=((0, 0), (150, 0), (300, 0)), rng=FirstSlot())
    m.broadcast(0, Frame("a", 8000, 0))
    m.broadcast(2, Frame("b", 8000, 2))
    k.run_until(seconds(1))
    assert got == []
    assert m.stats["collisions"] == 2


def test_no_collisions_mode_is_lossless():
    k, m, got = _medium(collisions=False, positions=((0, 0), (150, 0), (300, 0)), rng=FirstSlot())
    m.broadcast(0, Frame("a", 8000, 0))
    m.broadcast(2, Frame("b", 8000, 2))
    k.run_until(seconds(1))
    assert sorted(msg for _, r, msg in got if r == 1) == ["a", "b"]


def test_channel_busy_while_frame_on_air():
    k, m, got = _medium(positions=((0, 0), (100, 0), (250, 0)), rng=FirstSlot())
    m.broadcast(0, Frame("long", 80000, 0))
    k.run_until(seconds(0.001))
    assert m.channel_busy(1)
    assert not m.channel_busy(2)  # 250 m from the sender, out of range


def test_carrier_sense_defers():
    k, m, got = _medium(positions=((0, 0), (50, 0), (100, 0)))
    m.broadcast(0, Frame("a", 80000, 0))
    k.run_until(seconds(0.002))
    m.broadcast(2, Frame("b", 800, 2))
    k.run_until(seconds(1))
    assert sorted(msg for _, r, msg in got if r == 1) == ["a", "b"]
    assert m.stats["collisions"] == 0


def test_queue_overflow():
    k, m, got = _medium()
    ok = [m.broadcast(0, Frame(i, 800, 0)) for i in range(m.profile.queue_length + 3)]
    assert ok.count(False) == 3
    assert m.stats["queue_overflow"] == 3


def test_removed_node_stops_receiving():
    k, m, got = _medium()
    m.remove_node(1)
    m.broadcast(0, Frame("x", 800, 0))
    k.run_until(seconds(1))
    assert got == []
    assert not m.broadcast(1, Frame("y", 800, 1))


def test_neighbors_and_range_helper():
    k, m, _ = _medium()
    assert list(m.neighbors(1)) == [0, 2]
    assert in_range((0, 0), (200, 0), PROFILES["80211n"])
    assert not in_range((0, 0), (200.1, 0), PROFILES["80211n"])


def test_growth_beyond_initial_capacity():
    k = Kernel()
    m = Medium(k, PROFILES["80211p"], k.streams["mac"], capacity=2)
    for i in range(5):
        m.add_node(i * 10.0, 0.0)
    assert m.n == 5 and m.pos[4, 0] == 40.0


def test_zero_bit_frame_rejected():
    k, m, _ = _medium()
    with pytest.raises(ValueError):
        m.broadcast(0, Frame("x", 0, 0))


def test_lone_sender_latency_80211p():
    prof = PROFILES["80211p"]
    assert prof.airtime(512) == pytest.approx((46 + 256 + 512) / 18e6)
    assert prof.airtime(512) == pytest.approx(45.2e-6, abs=0.05e-6)
    k = Kernel(3)
    got = []
    m = Medium(k, prof, k.streams["mac"], deliver=lambda r, f: got.append(k.now))
    m.add_node(0, 0)
    m.add_node(500, 0)
    m.broadcast(0, Frame("x", 512, 0))
    k.run_until(seconds(1))
    backoff = (got[0] - seconds(prof.difs) - round(prof.airtime(512) * 1e9)) / seconds(prof.slot)
    assert abs(backoff - round(backoff)) < 1e-6 and 0 <= round(backoff) < prof.contention_window
