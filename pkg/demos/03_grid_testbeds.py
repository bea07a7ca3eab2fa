"""The 3x3 grid under the four testbeds.

A: fixed-time signals. B: the same signals plus a speed advisory that
times arrivals to the green. C: one MILP node per intersection, no
neighbor messages. D: C plus neighbor handoff. All four see the same
seeded arrivals; the table puts each metric side by side with its ratio
to A.

    python demos/03_grid_testbeds.py [duration_s] [seed]

A full hour takes a few minutes, mostly under D; the default is 15 min.
"""

import sys
import time

from aimgrid.cli import compare_reports
from aimgrid.metrics import compute_report
from aimgrid.scenario import load_scenario
from aimgrid.sim import Simulation

duration = float(sys.argv[1]) if len(sys.argv) > 1 else 900.0
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

docs = []
for tb in "ABCD":
    sc = load_scenario("grid_3x3").with_overrides(testbed=tb, seed=seed, duration=duration)
    t0 = time.perf_counter()
    res = Simulation(sc.sim_config()).run()
    rep = compute_report(res, meta={"fingerprint": sc.fingerprint(), "testbed": tb})
    print(f"{tb}: {res.injected} vehicles in {time.perf_counter() - t0:.0f} s")
    docs.append(rep.to_dict())

print()
print(compare_reports(docs))
