"""Solve a two-server optimum, show part of its decision table, and replay it in the simulator.

Run with ``python demos/optimal_table_replay.py``.
"""

from dynalloc import analytic, smdp
from dynalloc.core import DualBothDynamic, DualOneAlways, SmdpTable, SystemParams
from dynalloc.sim import SimConfig, simulate

p = SystemParams(lam=0.4, mu=1.0, delta=2.0, omega=1.0)
res = smdp.solve_optimal(p, cap_total=2)
print(f"optimal objective {res.objective:.6f}; request cap grew to {res.caps.cap_n}")
for pol in (DualOneAlways(2, 2), DualOneAlways(2, 3), DualBothDynamic()):
    print(f"  {pol!r}: ratio {analytic.evaluate_objective(pol, p) / res.objective:.4f}")

print("\nactions for n <= 4 (rows: n, columns: (m, a))")
pairs = res.policy.space.pairs
print("n  " + " ".join(f"{str(pa):>8}" for pa in pairs))
for n in range(5):
    print(f"{n:<3}" + " ".join(f"{res.policy.action(n, m, a).name:>8}" for m, a in pairs))

est = simulate(SmdpTable(res.policy), p, SimConfig(seed=3, warmup=1e3, horizon=2e4, replications=10))
print(f"\nsimulated objective {est.objective_mean:.4f} +/- {est.objective_ci_halfwidth:.4f}")
