"""Single-server policies at one load: closed forms, the optimum, and a simulator cross-check.

Run with ``python demos/single_server_tour.py``.
"""

from dynalloc import analytic, smdp
from dynalloc.core import DETERMINISTIC, AlwaysOn, Batching, HoldOn, SystemParams
from dynalloc.sim import SimConfig, simulate

p = SystemParams(lam=0.5, mu=1.0, delta=2.0, omega=1.0)
opt = smdp.solve_optimal(p, cap_total=1)
print(f"optimal objective {opt.objective:.6f} ({opt.iterations} policy-iteration steps)")
print(f"closed-form optimum {analytic.single_optimal_objective(p).value:.6f}\n")

cfg = SimConfig(seed=1, warmup=1e3, horizon=2e4, replications=10)
print(f"{'policy':<28}{'R':>9}{'C':>9}{'ratio':>8}   simulated R (95% CI)")
for pol in (HoldOn(1, 0.0), HoldOn(1, 4.0), HoldOn(DETERMINISTIC, 4.0), Batching(2), AlwaysOn(1)):
    m = analytic.evaluate(pol, p)
    est = simulate(pol, p, cfg)
    print(f"{pol!r:<28}{m.r:9.4f}{m.c:9.4f}{m.objective(p) / opt.objective:8.4f}   "
          f"{est.r_mean:.4f} +/- {est.r_ci_halfwidth:.4f}")
