"""Scheduling one intersection by hand.

Six vehicles approach a single crossing on two phases. We build the
access-time MILP, solve it with the bundled branch-and-bound, check the
result with the independent validator and print the model in LP format so
it can be fed to any external solver for a cross-check.

    python demos/01_single_intersection.py
"""

from aimgrid.milp import export_lp_text
from aimgrid.scheduler import (V_AVG, SchedulerParams, Vehicle, build_schedule_model, solve_schedule,
                               validate_schedule)

params = SchedulerParams(t_gap2=7.5)

# id, intersection, movement, phase, distance to the access point (m), speed (m/s)
vehicles = [
    Vehicle("w1", 1, "WB", "O", 300.0, V_AVG),
    Vehicle("w2", 1, "WB", "O", 330.0, V_AVG),
    Vehicle("s1", 1, "SB", "X", 310.0, V_AVG),
    Vehicle("n1", 1, "NB", "X", 420.0, V_AVG),
    Vehicle("e1", 1, "EB", "O", 520.0, V_AVG),
    Vehicle("s2", 1, "SB", "X", 600.0, V_AVG),
]

res = solve_schedule(vehicles, params, now=0.0)
print(f"status {res.solve_status.value}, objective {res.objective:.3f}, "
      f"{res.nodes} B&B nodes, {1000 * res.solve_wall_time:.1f} ms\n")

print(f"{'vehicle':>8} {'phase':>5} {'desired':>8} {'assigned':>9} {'delay':>6}")
for v in sorted(vehicles, key=lambda v: res.assignments[v.id]):
    t = res.assignments[v.id]
    print(f"{v.id:>8} {v.phase:>5} {res.t_desired[v.id]:8.2f} {t:9.2f} {t - res.t_desired[v.id]:6.2f}")

# the validator knows nothing about the model; it re-checks the three rules
bad = validate_schedule(vehicles, res.assignments, params)
print("\nviolations:", bad or "none")

# the same model in LP format
print("\n" + export_lp_text(build_schedule_model(vehicles, params, 0.0).model))
