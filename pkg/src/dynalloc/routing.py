"""Two-site system: state-oblivious split search and the state-dependent decision model.

Site 1 may route arrivals to site 2 (never the reverse).  A remotely served
request adds a mean transfer time ``d_r`` to its response, charged through the
objective as ``omega * lam1_routed * d_r``.  Each site allows at most one
allocation in progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ConvergenceError, InstabilityError, ParameterError, SystemParams
from .smdp import (CAP_RTOL, MAX_ITERS, Action, ActionArrays, DecisionModel, _body, _parse_header, policy_iteration,
                   solve_optimal, stationary_distribution)

#: Default cap on ``n1 + n2``.
DEFAULT_CAP = 60
DEFAULT_GRANULARITY = 0.01

# provisioning sub-actions as (site-1 change, site-2 change)
PROVISIONING: Tuple[Tuple[str, Tuple[Action, Action]], ...] = (
    ("IA1", (Action.IA, Action.NC)),
    ("IA2", (Action.NC, Action.IA)),
    ("IA1/IA2", (Action.IA, Action.IA)),
    ("CA1", (Action.CA, Action.NC)),
    ("CA2", (Action.NC, Action.CA)),
    ("CA1/CA2", (Action.CA, Action.CA)),
    ("D1", (Action.D, Action.NC)),
    ("D2", (Action.NC, Action.D)),
    ("IA1/CA2", (Action.IA, Action.CA)),
    ("IA2/CA1", (Action.CA, Action.IA)),
    ("IA1/D2", (Action.IA, Action.D)),
    ("IA2/D1", (Action.D, Action.IA)),
    ("NC", (Action.NC, Action.NC)),
)
ROUTING = ("RL", "R12")
ACTIONS: Tuple[Tuple[str, str], ...] = tuple((pv, rt) for pv, _ in PROVISIONING for rt in ROUTING)
_PROV_INDEX = {name: i for i, (name, _) in enumerate(PROVISIONING)}


def action_index(provisioning: str, routing: str) -> int:
    return 2 * _PROV_INDEX[provisioning] + ROUTING.index(routing)


@dataclass(frozen=True)
class TwoSiteParams:
    """Local arrival rates, transfer time, shared server parameters and per-site server counts."""

    lam1: float
    lam2: float
    d_r: float = 0.0
    base: SystemParams = field(default_factory=lambda: SystemParams(1.0))
    servers: Tuple[int, int] = (1, 1)
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.lam1 < 0 or self.lam2 < 0 or self.lam1 + self.lam2 <= 0:
            raise ParameterError("arrival rates must be >= 0 with a positive total")
        if not (self.d_r >= 0 and math.isfinite(self.d_r)):
            raise ParameterError("d_r must be a finite number >= 0")
        if any(s < 0 for s in self.servers) or sum(self.servers) < 1:
            raise ParameterError("server counts must be >= 0 with at least one server")
        if self.cap < 1:
            raise ParameterError("cap must be >= 1")
        if self.servers[1] == 0 and self.lam2 > 0:
            raise InstabilityError("site 2 has local arrivals but no servers")
        if self.lam1 + self.lam2 >= sum(self.servers) * self.base.mu:
            raise InstabilityError("total arrival rate exceeds the combined capacity")
        # only mu, delta and omega of ``base`` matter; pin lam so equal setups compare equal
        object.__setattr__(self, "base", self.base.replace(lam=self.lam1 + self.lam2))

    @property
    def mu(self):
        return self.base.mu

    @property
    def omega(self):
        return self.base.omega


# ---------------------------------------------------------------------------
# state-dependent model
# ---------------------------------------------------------------------------

def _site_pairs(servers):
    return [(m, a) for a in (0, 1) for m in range(servers + 1) if m + a <= servers]


class TwoSiteSpace:
    """States ``(n1, m1, a1, n2, m2, a2)`` with ``n1 + n2 <= cap``; a site without servers keeps ``n = 0``."""

    def __init__(self, servers: Tuple[int, int], cap: int):
        self.servers = tuple(servers)
        self.cap = cap
        p1 = sorted(_site_pairs(servers[0]), key=lambda t: (t[0] + t[1], t[1]))
        p2 = sorted(_site_pairs(servers[1]), key=lambda t: (t[0] + t[1], t[1]))
        self.pairs = (p1, p2)
        ns = [(n1, n2) for tot in range(cap + 1) for n1 in range(tot, -1, -1) for n2 in [tot - n1]
              if (servers[0] > 0 or n1 == 0) and (servers[1] > 0 or n2 == 0)]
        ns.sort()
        self._n_index = {nn: i for i, nn in enumerate(ns)}
        rows = [(n1, m1, a1, n2, m2, a2) for (n1, n2) in ns for (m1, a1) in p1 for (m2, a2) in p2]
        self.states = np.array(rows, dtype=np.int64)
        self.w1, self.w2 = len(p1), len(p2)
        self._pi = ({pa: i for i, pa in enumerate(p1)}, {pa: i for i, pa in enumerate(p2)})
        size = max(servers) + 3
        self._lut = []
        for k in range(2):
            lut = np.full((size, size), -1, dtype=np.int64)
            for (m, a), i in self._pi[k].items():
                lut[m, a] = i
            self._lut.append(lut)
        nlut = np.full((cap + 2, cap + 2), -1, dtype=np.int64)
        for (n1, n2), i in self._n_index.items():
            nlut[n1, n2] = i
        self._nlut = nlut

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return (tuple(int(x) for x in s) for s in self.states)

    def index(self, n1, m1, a1, n2, m2, a2) -> int:
        return (self._n_index[(n1, n2)] * self.w1 + self._pi[0][(m1, a1)]) * self.w2 + self._pi[1][(m2, a2)]

    def index_array(self, n1, m1, a1, n2, m2, a2):
        size = self._lut[0].shape[0]
        ok = (n1 >= 0) & (n2 >= 0) & (n1 + n2 <= self.cap)
        for v in (m1, a1, m2, a2):
            ok &= (v >= 0) & (v < size)
        c = lambda x, hi: np.clip(x, 0, hi)
        ni = self._nlut[c(n1, self.cap + 1), c(n2, self.cap + 1)]
        i1 = self._lut[0][c(m1, size - 1), c(a1, size - 1)]
        i2 = self._lut[1][c(m2, size - 1), c(a2, size - 1)]
        ok &= (ni >= 0) & (i1 >= 0) & (i2 >= 0)
        return np.where(ok, (ni * self.w1 + i1) * self.w2 + i2, -1)


def _site_change(m, a, act, servers):
    """Post-action counts and feasibility of one site's change (at most one allocation in progress)."""
    if act == Action.IA:
        return m, a + 1, (a == 0) & (m + a < servers)
    if act == Action.CA:
        return m, a - 1, a == 1
    if act == Action.D:
        return m - 1, a, (m > 0) & (a == 0)
    return m, a, np.ones_like(m, dtype=bool)


class TwoSiteModel(DecisionModel):
    """Transition and reward rates of the 26-action two-site decision process."""

    def __init__(self, tp: TwoSiteParams):
        if tp.base.delta <= 0:
            raise ParameterError("the decision model needs delta > 0")
        self.tp = tp
        self.space = TwoSiteSpace(tp.servers, tp.cap)
        self.n_states = len(self.space)
        self.n_actions = len(ACTIONS)
        self._prov: Dict[int, tuple] = {}

    def _provisioning(self, k):
        hit = self._prov.get(k)
        if hit is not None:
            return hit
        tp, s = self.tp, self.space.states
        n1, m1, a1, n2, m2, a2 = s.T
        c1, c2 = PROVISIONING[k][1]
        mm1, aa1, ok1 = _site_change(m1, a1, c1, tp.servers[0])
        mm2, aa2, ok2 = _site_change(m2, a2, c2, tp.servers[1])
        ok = ok1 & ok2
        mm1, aa1 = np.where(ok, mm1, 0), np.where(ok, aa1, 0)
        mm2, aa2 = np.where(ok, mm2, 0), np.where(ok, aa2, 0)
        mu, d = tp.mu, tp.base.delta
        room = (n1 + n2) < tp.cap
        idx = self.space.index_array
        common_rate = np.stack([
            np.where(room, tp.lam2, 0.0),
            np.minimum(n1, mm1) * mu,
            np.minimum(n2, mm2) * mu,
            aa1 / d,
            aa2 / d,
        ], axis=1)
        common_tgt = np.stack([
            idx(n1, mm1, aa1, n2 + 1, mm2, aa2),
            idx(n1 - 1, mm1, aa1, n2, mm2, aa2),
            idx(n1, mm1, aa1, n2 - 1, mm2, aa2),
            idx(n1, mm1 + 1, aa1 - 1, n2, mm2, aa2),
            idx(n1, mm1, aa1, n2, mm2 + 1, aa2 - 1),
        ], axis=1)
        lam1 = np.where(room, tp.lam1, 0.0)
        local = idx(n1 + 1, mm1, aa1, n2, mm2, aa2)
        remote = idx(n1, mm1, aa1, n2 + 1, mm2, aa2)
        base_reward = -(tp.omega * (n1 + n2) + tp.mu * (mm1 + aa1 + mm2 + aa2))
        hit = (ok, common_rate, common_tgt, lam1, local, remote, base_reward.astype(float))
        self._prov[k] = hit
        return hit

    def arrays(self, action) -> ActionArrays:
        k, r = divmod(int(action), 2)
        ok, crate, ctgt, lam1, local, remote, reward = self._provisioning(k)
        rate = np.concatenate([lam1[:, None], crate], axis=1)
        tgt = np.concatenate([(remote if r else local)[:, None], ctgt], axis=1)
        tgt = np.where(rate > 0, tgt, -1)
        if r:
            reward = reward - self.tp.omega * self.tp.lam1 * self.tp.d_r
        feasible = ok & (rate.sum(axis=1) > 0)
        if self.tp.lam1 > 0 and self.tp.servers[1 if r else 0] == 0:
            feasible = np.zeros_like(feasible)
        return ActionArrays(feasible, reward, tgt, rate)


def two_site_transitions(state, action, tp: TwoSiteParams):
    """Outgoing transitions and reward rate for ``action`` (``(provisioning, routing)`` or index)."""
    model = TwoSiteModel(tp)
    idx = model.space.index(*state)
    act = action_index(*action) if isinstance(action, tuple) else int(action)
    arr = model.arrays(act)
    if not arr.feasible[idx]:
        raise ParameterError(f"action {ACTIONS[act]} not allowed in state {tuple(state)}")
    out = {}
    for t, q in zip(arr.target[idx], arr.rate[idx]):
        if t >= 0 and q > 0:
            key = tuple(int(x) for x in model.space.states[t])
            out[key] = out.get(key, 0.0) + float(q)
    return sorted(out.items()), float(arr.reward[idx])


def initial_two_site_policy(space: TwoSiteSpace) -> np.ndarray:
    """Local routing; each site steers ``m + a`` towards ``min(n_i, servers_i)`` one step at a time."""
    s = space.states
    n1, m1, a1, n2, m2, a2 = s.T
    want = []
    for n, m, a, cap in ((n1, m1, a1, space.servers[0]), (n2, m2, a2, space.servers[1])):
        target = np.minimum(n, cap)
        tot = m + a
        ch = np.full(len(s), int(Action.NC))
        ch[(tot < target) & (a == 0)] = Action.IA
        ch[(tot > target) & (a == 1)] = Action.CA
        ch[(tot > target) & (a == 0) & (m > 0)] = Action.D
        want.append(ch)
    lookup = {pair: i for i, (_, pair) in enumerate(PROVISIONING)}
    out = np.empty(len(s), dtype=np.int16)
    for i in range(len(s)):
        c1, c2 = Action(want[0][i]), Action(want[1][i])
        k = lookup.get((c1, c2))
        if k is None:  # a combination outside the catalogue: act on site 1 only
            k = lookup[(c1, Action.NC)]
        out[i] = 2 * k
    return out


@dataclass
class TwoSiteTable:
    tp: TwoSiteParams
    actions: np.ndarray
    space: TwoSiteSpace = field(init=False, repr=False)

    def __post_init__(self):
        self.space = TwoSiteSpace(self.tp.servers, self.tp.cap)
        self.actions = np.asarray(self.actions, dtype=np.int16)

    def action(self, *state) -> Tuple[str, str]:
        return ACTIONS[int(self.actions[self.space.index(*state)])]

    def to_text(self, extra: Optional[dict] = None) -> str:
        tp, b = self.tp, self.tp.base
        head = ["# dynalloc two-site policy table",
                f"# lam1={tp.lam1!r} lam2={tp.lam2!r} d_r={tp.d_r!r} mu={b.mu!r} delta={b.delta!r} omega={b.omega!r}",
                f"# servers1={tp.servers[0]} servers2={tp.servers[1]} cap={tp.cap}"]
        for k, v in (extra or {}).items():
            head.append(f"# {k}={v!r}" if isinstance(v, float) else f"# {k}={v}")
        head.append("n1 m1 a1 n2 m2 a2 provisioning routing")
        rows = [" ".join(map(str, st)) + " {} {}".format(*ACTIONS[int(x)]) for st, x in zip(self.space, self.actions)]
        return "\n".join(head + rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TwoSiteTable":
        meta = _parse_header(text)
        base = SystemParams(1.0, float(meta["mu"]), float(meta["delta"]), float(meta["omega"]))
        tp = TwoSiteParams(float(meta["lam1"]), float(meta["lam2"]), float(meta["d_r"]), base,
                           (int(meta["servers1"]), int(meta["servers2"])), int(meta["cap"]))
        space = TwoSiteSpace(tp.servers, tp.cap)
        acts = np.full(len(space), -1, dtype=np.int16)
        for line in _body(text):
            f = line.split()
            acts[space.index(*map(int, f[:6]))] = action_index(f[6], f[7])
        if (acts < 0).any():
            raise ParameterError("two-site table does not cover every state")
        return cls(tp, acts)


@dataclass
class TwoSiteResult:
    table: TwoSiteTable
    avg_reward: float
    iterations: int
    history: List[float]
    cap_trace: List[Tuple[int, float]]

    @property
    def objective(self) -> float:
        return -self.avg_reward


def _solve_two_site_fixed(tp, initial=None, max_iters=MAX_ITERS):
    model = TwoSiteModel(tp)
    start = _repair(model, initial_two_site_policy(model.space)) if initial is None else initial
    anchor = model.space.index(0, 0, 0, 0, 0, 0)
    res = policy_iteration(model, start, anchor, max_iters)
    return TwoSiteResult(TwoSiteTable(tp, res.policy), res.gain, res.iterations, res.history,
                         [(tp.cap, -res.gain)])


def _extend_two_site(old: TwoSiteTable, tp: TwoSiteParams) -> np.ndarray:
    space = TwoSiteSpace(tp.servers, tp.cap)
    start = initial_two_site_policy(space)
    s = space.states
    inside = (s[:, 0] + s[:, 3]) <= old.tp.cap
    idx = old.space.index_array(*[np.where(inside, s[:, j], 0) for j in range(6)])
    model = TwoSiteModel(tp)
    prev = old.actions[np.clip(idx, 0, None)]
    for act in np.unique(prev):
        feas = model.arrays(int(act)).feasible
        use = inside & (idx >= 0) & (prev == act) & feas
        start[use] = act
    return _repair(model, start)


def _repair(model, policy: np.ndarray) -> np.ndarray:
    """Swap infeasible choices (unreachable corners of the space) for the first feasible action."""
    policy = np.array(policy, dtype=np.int16)
    bad = np.zeros(len(policy), dtype=bool)
    for act in np.unique(policy):
        sel = policy == act
        bad[sel] = ~model.arrays(int(act)).feasible[sel]
    for act in range(len(ACTIONS)):
        if not bad.any():
            break
        ok = bad & model.arrays(act).feasible
        policy[ok] = act
        bad &= ~ok
    return policy


def solve_state_dependent(tp: TwoSiteParams, adaptive: bool = False, rtol: float = CAP_RTOL,
                          max_doublings: int = 3, max_iters: int = MAX_ITERS) -> TwoSiteResult:
    """Optimal joint provisioning and routing.

    With ``adaptive`` the cap on ``n1 + n2`` doubles (warm-started) until the
    objective moves by less than ``rtol``.
    """
    res = _solve_two_site_fixed(tp, max_iters=max_iters)
    if not adaptive:
        return res
    trace = list(res.cap_trace)
    for _ in range(max_doublings):
        tp2 = replace(tp, cap=2 * res.table.tp.cap)
        nxt = _solve_two_site_fixed(tp2, _extend_two_site(res.table, tp2), max_iters)
        trace += nxt.cap_trace
        nxt.iterations += res.iterations
        done = abs(nxt.objective - res.objective) <= rtol * abs(nxt.objective)
        res = nxt
        if done:
            res.cap_trace = trace
            return res
    raise ConvergenceError(f"two-site objective still moving after {max_doublings} cap doublings")


def two_site_stationary(table: TwoSiteTable) -> Tuple[np.ndarray, float]:
    """Stationary distribution and the fraction of time site-1 arrivals are routed remotely."""
    model = TwoSiteModel(table.tp)
    pi = stationary_distribution(model, table.actions)
    remote = (table.actions % 2) == 1
    return pi, float(pi[remote].sum())


# ---------------------------------------------------------------------------
# state-oblivious routing
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4096)
def _site_optimum(lam: float, servers: int, mu: float, delta: float, omega: float) -> float:
    if lam <= 0 or servers == 0:
        return 0.0 if lam <= 0 else math.inf
    if lam >= servers * mu:
        return math.inf
    p = SystemParams(lam, mu, delta, omega)
    return solve_optimal(p, cap_total=servers, cap_a=1).objective


def site_objective(lam: float, servers: int, base: SystemParams) -> float:
    """Optimal single-site objective (``inf`` when overloaded, 0 without traffic)."""
    return _site_optimum(round(float(lam), 12), int(servers), base.mu, base.delta, base.omega)


def split_objective(tp: TwoSiteParams, f: float) -> float:
    """Combined objective when a fraction ``f`` of site-1 traffic goes to site 2."""
    l1 = tp.lam1 * (1.0 - f)
    l2 = tp.lam2 + tp.lam1 * f
    o1 = site_objective(l1, tp.servers[0], tp.base)
    o2 = site_objective(l2, tp.servers[1], tp.base)
    return o1 + o2 + tp.omega * tp.lam1 * f * tp.d_r


def balanced_fraction(tp: TwoSiteParams) -> float:
    """Split equalising per-server load (equal rates for equal server counts)."""
    s1, s2 = tp.servers
    if tp.lam1 <= 0:
        return 0.0
    # (lam1 (1-f)) / s1 = (lam2 + lam1 f) / s2
    f = (s2 * tp.lam1 - s1 * tp.lam2) / (tp.lam1 * (s1 + s2))
    return min(1.0, max(0.0, f))


@dataclass(frozen=True)
class ObliviousResult:
    fraction: float
    objective: float
    site1: float
    site2: float


def oblivious_optimal(tp: TwoSiteParams, granularity: float = DEFAULT_GRANULARITY,
                      extra_points: Sequence[float] = ()) -> ObliviousResult:
    """Best fixed split on the grid ``0, g, 2g, ..., 1`` (plus ``extra_points``).

    The balanced split is always among the candidates so that the result never
    exceeds :func:`baseline_routing`.
    """
    if not granularity > 0:
        raise ParameterError("granularity must be > 0")
    steps = int(round(1.0 / granularity))
    grid = {round(i / steps, 12) for i in range(steps + 1)} if abs(steps * granularity - 1) < 1e-9 else \
        {round(min(1.0, i * granularity), 12) for i in range(int(math.floor(1 / granularity)) + 1)} | {1.0}
    grid |= {0.0, 1.0, balanced_fraction(tp)} | {float(x) for x in extra_points}
    best = None
    for f in sorted(grid):
        v = split_objective(tp, f)
        if best is None or v < best[1]:
            best = (f, v)
    if best is None or not math.isfinite(best[1]):
        raise InstabilityError("no split keeps both sites stable")
    f = best[0]
    return ObliviousResult(f, best[1],
                           site_objective(tp.lam1 * (1 - f), tp.servers[0], tp.base),
                           site_objective(tp.lam2 + tp.lam1 * f, tp.servers[1], tp.base))


BASELINES = ("local_only", "all_to_site2", "balanced")


def baseline_routing(tp: TwoSiteParams, mode: str) -> float:
    """Objective of a fixed split: none, all, or load-balanced site-1 traffic to site 2."""
    if mode == "local_only":
        f = 0.0
    elif mode == "all_to_site2":
        f = 1.0
    elif mode == "balanced":
        f = balanced_fraction(tp)
    else:
        raise ParameterError(f"unknown routing baseline {mode!r}")
    v = split_objective(tp, f)
    if not math.isfinite(v):
        raise InstabilityError(f"{mode} routing overloads a site")
    return v
