"""Two sites with unequal load: how much does state-dependent routing buy over a fixed split?

Run with ``python demos/routing_tradeoff.py``.
"""

from dynalloc import routing
from dynalloc.core import SystemParams

base = SystemParams(1.0, mu=1.0, delta=2.0, omega=1.0)
print(f"{'d_r':>5}{'state-dep':>11}{'oblivious':>11}{'split':>7}{'local':>9}{'ratio':>8}")
for d_r in (0.0, 1.0, 2.0, 4.0, 8.0):
    tp = routing.TwoSiteParams(0.8, 0.04, d_r, base, (1, 1), cap=40)
    sd = routing.solve_state_dependent(tp)
    ob = routing.oblivious_optimal(tp)
    local = routing.baseline_routing(tp, "local_only")
    print(f"{d_r:5g}{sd.objective:11.4f}{ob.objective:11.4f}{ob.fraction:7.2f}{local:9.4f}"
          f"{ob.objective / sd.objective:8.4f}")
