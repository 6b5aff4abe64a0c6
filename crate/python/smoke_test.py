#!/usr/bin/env python3
"""Imports the compiled soqn_rs module and pokes its main entry points.

Build the module first, then run this script from anywhere:

    cargo build -p soqn-py --release
    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

MM1_JSON = """
{
  "arrival_rate_per_h": 1440,
  "pool_size": 8,
  "nodes": [{"label": "svc", "discipline": "fcfs", "rate_per_s": 1.0}],
  "routing": [[0.0, 1.0], [1.0, 0.0]]
}
"""


def locate_cdylib():
    for profile in ("release", "debug"):
        for name in ("libsoqn_rs.so", "libsoqn_rs.dylib"):
            path = ROOT / "target" / profile / name
            if path.exists():
                return path
    sys.exit("module not built; run: cargo build -p soqn-py --release")


def import_module():
    stage = Path(tempfile.mkdtemp(prefix="soqn-rs-"))
    shutil.copy2(locate_cdylib(), stage / "soqn_rs.so")
    sys.path.insert(0, str(stage))
    import soqn_rs

    return soqn_rs


def close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1.0)


def main():
    soqn = import_module()
    print(f"imported soqn_rs from {soqn.__file__}")

    two_station = soqn.Model.rmfs("two-station")
    combi = soqn.Model.rmfs("combi")
    assert two_station.min_robots() == 17, two_station.min_robots()
    assert combi.min_robots() == 16, combi.min_robots()
    print("fleet thresholds: two-station 17, combi 16")

    combi.robots = 20
    report = soqn.evaluate(combi)
    assert report.stable
    assert close(report.turnover_s, 91.703742, rel=1e-5), report.turnover_s
    assert close(report.utilization["p1"], 0.65, rel=1e-9)
    print(f"analytic turnover at 20 robots: {report.turnover_s:.3f} s")

    short = soqn.evaluate(combi, turnover_definition="exclude-travel")
    assert short.turnover_s < report.turnover_s
    print(f"exclude-travel turnover: {short.turnover_s:.3f} s")

    two_station.robots = 16
    undersized = soqn.evaluate(two_station)
    assert not undersized.stable
    assert undersized.turnover_s is None
    assert undersized.capacity_per_h < two_station.arrival_rate_per_h
    print("undersized fleet correctly reported unstable")

    params = soqn.RmfsParameters(robots=25, order_rate_per_h=400.0)
    relaxed = soqn.Model.rmfs("two-station", params)
    assert relaxed.robots == 25
    assert soqn.evaluate(relaxed).stable
    print("parameter overrides flow through")

    mm1 = soqn.Model.from_json(MM1_JSON)
    assert mm1.layout == "custom"
    assert close(mm1.capacity_per_h(), 3600.0)
    assert mm1.visit_ratios() == {"svc": 1.0}
    lam, mu = 0.4, 1.0
    wait = soqn.evaluate(mm1).external_wait_s
    # Eight robots make the pool effectively infinite at this load, so the
    # backorder wait nearly vanishes; just check it is small and positive.
    assert 0.0 < wait < lam / (mu * (mu - lam)), wait
    print(f"custom single-server model: external wait {wait:.6f} s")

    first = soqn.simulate(combi, horizon_s=50_000.0, replications=4, seed=99)
    again = soqn.simulate(combi, horizon_s=50_000.0, replications=4, seed=99)
    assert first.turnover_s.mean == again.turnover_s.mean
    assert first.turnover_s.half_width == again.turnover_s.half_width
    other = soqn.simulate(combi, horizon_s=50_000.0, replications=4, seed=100)
    assert first.turnover_s.mean != other.turnover_s.mean
    gap = abs(first.turnover_s.mean - report.turnover_s) / report.turnover_s
    assert gap < 0.15, gap
    print(f"simulated turnover: {first.turnover_s} (analytic gap {gap:.1%})")

    print("smoke test passed")


if __name__ == "__main__":
    main()
