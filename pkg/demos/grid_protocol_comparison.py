"""Short signalised-grid run of all four protocols side by side.

Traffic light controllers poll the vehicles on their approaches; every
poll and answer rides on the protocol under test. One 120 s seed per
protocol keeps this around a minute.

    python3 demos/grid_protocol_comparison.py [duration_s]
"""
import sys
import time

from radnetve.harness import PROTOCOLS, desk_config, run_scenario

if __name__ == "__main__":
    duration = float(sys.argv[1]) if len(sys.argv) > 1 else 120.0
    print(f"{'protocol':8s} {'MO':>9s} {'LCAN ms':>8s} {'DDR':>6s} {'NoH':>4s} {'RoM m':>7s} {'wall s':>7s}")
    for proto in PROTOCOLS:
        t0 = time.perf_counter()
        m = run_scenario(desk_config("grid", proto, duration=duration)).metrics
        wall = time.perf_counter() - t0
        print(f"{proto:8s} {m['MO']:9d} {m['LCAN'] * 1e3:8.3f} {m['DDR']:6.3f} {m['NoH']:4d} {m['RoM']:7.1f} {wall:7.1f}")
