"""End-to-end acceptance checks, one verdict line per criterion.

The trend criteria run ten seeds of every protocol on the desk-scale grid
and highway, which takes several tens of minutes on one core. Set
``RADNETVE_ACCEPTANCE_OUT`` to keep the CSV outputs.
"""
import math
import os
import random
import time
from pathlib import Path

import pytest

from radnetve.harness.config import PROTOCOLS, desk_config
from radnetve.harness.experiment import run_experiment
from radnetve.rvep import forwarding_delay

import oracles
import test_properties
from acceptance_log import LINES
from bench import enumerate_cases, expected_sequences, run_case, simulated_sequences
from test_roadnet import _solo_vehicle

pytestmark = pytest.mark.acceptance

REPLICATIONS = 10
LABELS = {"rvep": "RVEP", "rp": "RP", "ccn-r": "CCN_R", "ccn-p": "CCN_P"}


def verdict(criterion, ok, detail):
    LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    print(LINES[-1])
    return ok


@pytest.fixture(scope="session")
def out_root(tmp_path_factory):
    env = os.environ.get("RADNETVE_ACCEPTANCE_OUT")
    if env:
        root = Path(env)
        root.mkdir(parents=True, exist_ok=True)
        return root
    return tmp_path_factory.mktemp("acceptance")


def _sweep(scenario, out_root):
    results = {}
    for proto in PROTOCOLS:
        t0 = time.perf_counter()
        res = run_experiment(desk_config(scenario, proto), REPLICATIONS, out_root / f"{scenario}_{proto}")
        results[proto] = (res, time.perf_counter() - t0)
    return results


@pytest.fixture(scope="session")
def grid(out_root):
    return _sweep("grid", out_root)


@pytest.fixture(scope="session")
def highway(out_root):
    return _sweep("highway", out_root)


def _runtime(results):
    return ", ".join(f"{LABELS[p]} {t / REPLICATIONS:.1f}s/run" for p, (_, t) in results.items())


def _metric(results, name):
    return {p: res.summary[name] for p, (res, _) in results.items()}


def _fmt(values, scale=1.0):
    return " ".join(f"{LABELS[p]}={v * scale:.4g}" for p, v in values.items())


def test_c1_protocol_oracle_equivalence():
    t0 = time.perf_counter()
    cases = enumerate_cases()
    mismatches = 0
    for case in cases:
        trace = run_case(case)
        expected, _ = expected_sequences(case, trace)
        if simulated_sequences(case, trace) != expected:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = len(cases) >= 50 and mismatches == 0 and elapsed < 5.0
    verdict(1, ok, f"{len(cases)} cases, {mismatches} discrepancies, {elapsed:.2f}s (limit 5s)")
    assert ok


PROPERTIES = [
    ("duplicate suppression (RVEP)", test_properties.test_duplicate_copies_are_discarded),
    ("duplicate suppression and hop limit (RP)", test_properties.test_rp_duplicates_discarded_and_hop_limit_respected),
    ("per-interest hop bound", test_properties.test_hop_bound_per_interest),
    ("direction and road gates", test_properties.test_direction_and_road_gates),
    ("RVEP step vs reference", test_properties.test_rvep_reception_matches_reference_step),
    ("VE codec round trip", test_properties.test_ve_codec_round_trip),
    ("R codec round trip", test_properties.test_r_codec_round_trip),
    ("DDR <= 1", test_properties.test_ddr_is_a_fraction_and_matches_hand_count),
    ("determinism replay", test_properties.test_same_seed_replays_identically),
]


def test_c2_invariant_suite():
    failures = []
    for name, prop in PROPERTIES:
        assert prop._hypothesis_internal_use_settings.max_examples >= 1000, name
        try:
            prop()
        except Exception as exc:  # any falsifying example counts as a violation
            failures.append(f"{name}: {type(exc).__name__}")
    ok = not failures
    verdict(2, ok, f"{len(PROPERTIES)} properties x 1000 cases, violations: {failures or 'none'}")
    assert ok


def test_c3_grid_overhead_and_latency(grid):
    mo = _metric(grid, "MO")
    lcan = _metric(grid, "LCAN")
    order = mo["rvep"] < mo["rp"] < mo["ccn-r"] < mo["ccn-p"]
    ratio = mo["rp"] / mo["rvep"]
    fastest = min(lcan, key=lcan.get) == "rvep"
    slowest_run = max(t / REPLICATIONS for _, t in grid.values())
    ok = order and ratio >= 2.0 and fastest and slowest_run < 120.0
    verdict(
        3, ok,
        f"MO {_fmt(mo)}; RP/RVEP={ratio:.2f} (need >= 2); LCAN ms {_fmt(lcan, 1e3)}; runtime {_runtime(grid)}",
    )
    assert ok


def test_c4_highway_delivery_and_propagation(highway):
    ddr = _metric(highway, "DDR")
    tomp = _metric(highway, "ToMP")
    margins = {p: ddr["rvep"] / ddr[p] if ddr[p] > 0 else math.inf for p in PROTOCOLS if p != "rvep"}
    ddr_ok = all(m >= 1.5 for m in margins.values())
    finite = {p: v for p, v in tomp.items() if not math.isnan(v)}
    tomp_ok = "rvep" in finite and min(finite, key=finite.get) == "rvep"
    slowest_run = max(t / REPLICATIONS for _, t in highway.values())
    ok = ddr_ok and tomp_ok and slowest_run < 120.0
    verdict(
        4, ok,
        f"DDR {_fmt(ddr)}; RVEP/baseline "
        + " ".join(f"{LABELS[p]}={m:.2f}" for p, m in margins.items())
        + f" (need >= 1.5); ToMP ms {_fmt(tomp, 1e3)}; runtime {_runtime(highway)}",
    )
    assert ok


def test_c5_rvep_range_stays_on_segment(grid):
    cfg = desk_config("grid")
    rom = grid["rvep"][0].summary["RoM"]
    bound = cfg.spacing * cfg.scale + cfg.radio_profile.range
    ok = rom <= bound
    verdict(5, ok, f"RVEP RoM={rom:.1f} m (bound {bound:.0f} m)")
    assert ok


def test_c6_forwarding_delay_mean():
    rng = random.Random(2024)
    n = 100_000
    mean = sum(forwarding_delay(100.0, rng) for _ in range(n)) / n
    reference = oracles.mean_forwarding_delay(100.0)
    ok = reference == 0.005 and abs(mean - 0.005) <= 0.05 * 0.005
    verdict(6, ok, f"mean {mean * 1e3:.4f} ms over {n} draws (target 5 ms +/- 5%)")
    assert ok


def test_c7_mobility_sanity(grid, highway):
    crashes = sum(int(r["rear_end_collisions"]) for res in (grid, highway) for run, _ in res.values() for r in run.runs)
    veh, p = _solo_vehicle(0.0, 60.0)
    err = abs(veh.v - p.v0) / p.v0
    ok = crashes == 0 and err <= 0.01
    verdict(7, ok, f"{crashes} rear-end collisions over {8 * REPLICATIONS} runs; free-flow speed at 60 s within {err:.3%} of v0")
    assert ok


def test_c8_byte_identical_outputs(grid, highway, out_root):
    same = []
    for scenario, results in (("grid", grid), ("highway", highway)):
        first = results["rvep"][0].out_dir
        again = run_experiment(desk_config(scenario, "rvep"), REPLICATIONS, out_root / f"{scenario}_rvep_again").out_dir
        for name in ("runs.csv", "aggregate.csv", "manifest.json"):
            same.append((first / name).read_bytes() == (again / name).read_bytes())
    ok = all(same)
    verdict(8, ok, f"{sum(same)}/{len(same)} output files identical on re-execution")
    assert ok
