"""How far ahead vehicles learn about a slow zone on the highway.

A roadside notifier sits before a 20 km/h stretch at the end of a 5 km
road. Each vehicle asks for obstacle warnings until answered, then starts
cooperative cruise control behind the vehicle ahead. The script reports
where each vehicle was when the warning arrived.

    python3 demos/highway_obstacle_warning.py [protocol]
"""
import statistics
import sys

from radnetve.apps import CooperativeCruise
from radnetve.harness import World, desk_config

if __name__ == "__main__":
    proto = sys.argv[1] if len(sys.argv) > 1 else "rvep"
    world = World(desk_config("highway", proto, duration=240.0, highway_length=5000.0))
    informed = []
    original = CooperativeCruise._on_obstacle

    def record(self, interest, payload, src):
        if not self.informed:
            informed.append(self.vehicle.x)
        original(self, interest, payload, src)

    CooperativeCruise._on_obstacle = record
    result = world.run()
    CooperativeCruise._on_obstacle = original
    m = result.metrics
    print(f"{proto}: {result.stats['vehicles']} vehicles, {len(informed)} warned")
    if informed:
        print(f"warning position along the road: median {statistics.median(informed):.0f} m, earliest {min(informed):.0f} m")
    print(f"DDR={m['DDR']:.3f} ToMP={m['ToMP'] * 1e3:.1f} ms MO={m['MO']} rear-end collisions={result.stats['rear_end_collisions']}")
