"""Average-reward semi-Markov decision model for dynamic server allocation.

A state ``(n, m, a)`` records the requests present, the servers allocated and
the allocations in progress *on entry*; the chosen action is applied at once
and the post-action pair ``(m', a')`` drives the exponential sojourn.  Policy
iteration alternates an exact sparse value determination with a greedy
improvement step until the policy repeats.

The policy-iteration core (:func:`policy_iteration`) works on any model that
exposes per-action transition arrays, so the two-site model in
:mod:`dynalloc.routing` reuses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ConvergenceError, Metrics, ParameterError, SystemParams

#: Relative slack below which a candidate action does not displace the current one.
IMPROVE_TOL = 1e-11
#: Relative objective change accepted when doubling ``cap_n``.
CAP_RTOL = 1e-6
MAX_ITERS = 1000


class Action(IntEnum):
    """Decision at state entry; the integer order is the tie-break order."""

    IA = 0  # initiate allocation
    CA = 1  # cancel an allocation in progress
    D = 2  # deallocate an idle-or-busy server
    NC = 3  # no change


@dataclass(frozen=True)
class Caps:
    """Truncation of the state space.

    ``cap_total`` bounds ``m + a`` (further limited by ``cap_n``); ``cap_a``
    bounds ``a`` and is unrestricted when ``None``.
    """

    cap_n: int
    cap_total: int
    cap_a: Optional[int] = None

    def __post_init__(self):
        if self.cap_n < 1 or self.cap_total < 1:
            raise ParameterError("cap_n and cap_total must be >= 1")
        if self.cap_a is not None and self.cap_a < 1:
            raise ParameterError("cap_a must be >= 1 when given")

    @property
    def server_cap(self) -> int:
        return min(self.cap_total, self.cap_n)

    def with_cap_n(self, cap_n) -> "Caps":
        return Caps(cap_n, self.cap_total, self.cap_a)


# ---------------------------------------------------------------------------
# generic policy iteration
# ---------------------------------------------------------------------------

@dataclass
class ActionArrays:
    """Per-state data of one action: feasibility, reward rate and up to K transitions.

    ``target[s, j] < 0`` marks an absent transition (its rate is zero).
    """

    feasible: np.ndarray
    reward: np.ndarray
    target: np.ndarray
    rate: np.ndarray


class DecisionModel:
    """Interface used by :func:`policy_iteration`."""

    n_states: int
    n_actions: int

    def arrays(self, action: int) -> ActionArrays:  # pragma: no cover - interface
        raise NotImplementedError


def _generator(model: DecisionModel, policy: np.ndarray):
    """Sparse generator and reward vector of the chain induced by ``policy``."""
    ns = model.n_states
    rows, cols, vals = [], [], []
    reward = np.zeros(ns)
    for act in range(model.n_actions):
        sel = np.flatnonzero(policy == act)
        if sel.size == 0:
            continue
        arr = model.arrays(act)
        if not arr.feasible[sel].all():
            bad = sel[~arr.feasible[sel]][0]
            raise ParameterError(f"policy uses infeasible action {act} in state index {bad}")
        reward[sel] = arr.reward[sel]
        tgt = arr.target[sel]
        rate = arr.rate[sel]
        ok = (tgt >= 0) & (rate > 0)
        r_idx = np.repeat(sel[:, None], tgt.shape[1], axis=1)
        rows.append(r_idx[ok])
        cols.append(tgt[ok])
        vals.append(rate[ok])
        rows.append(sel)
        cols.append(sel)
        vals.append(-np.where(ok, rate, 0.0).sum(axis=1))
    q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(ns, ns))
    return q, reward


def value_determination(model: DecisionModel, policy: np.ndarray, anchor: int = 0):
    """Gain and relative values of ``policy`` with ``v[anchor] = 0``.

    Solves ``Q v - g = -r`` with the anchor's column replaced by the unknown gain.
    Returns ``(gain, values, residual)``.
    """
    q, reward = _generator(model, policy)
    ns = model.n_states
    keep = np.ones(ns)
    keep[anchor] = 0.0
    gain_col = sp.csr_matrix((np.full(ns, -1.0), (np.arange(ns), np.full(ns, anchor))), shape=(ns, ns))
    a = q @ sp.diags(keep) + gain_col
    try:
        with np.errstate(all="raise"):
            x = spla.spsolve(a.tocsc(), -reward)
    except (RuntimeError, FloatingPointError) as exc:  # singular factorization
        raise ConvergenceError(f"value determination failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("value determination produced non-finite values (multichain policy?)")
    gain = float(x[anchor])
    v = x.copy()
    v[anchor] = 0.0
    resid = float(np.max(np.abs(q @ v - gain + reward)))
    return gain, v, resid


def improvement_scores(model: DecisionModel, gain: float, v: np.ndarray) -> np.ndarray:
    """Test quantity ``(R - g + sum q v') / sum q`` for every (action, state); ``-inf`` if infeasible."""
    out = np.full((model.n_actions, model.n_states), -np.inf)
    for act in range(model.n_actions):
        arr = model.arrays(act)
        tgt = np.where(arr.target >= 0, arr.target, 0)
        rate = np.where(arr.target >= 0, arr.rate, 0.0)
        qsum = rate.sum(axis=1)
        f = arr.feasible & (qsum > 0)
        num = arr.reward - gain + (rate * v[tgt]).sum(axis=1)
        out[act, f] = num[f] / qsum[f]
    return out


def policy_improvement(model: DecisionModel, gain: float, v: np.ndarray, current: np.ndarray,
                       tol: float = IMPROVE_TOL) -> np.ndarray:
    """Greedy update keeping the current action when it is a maximiser.

    Otherwise the lowest-index action within ``tol`` (relative) of the maximum is taken.
    """
    scores = improvement_scores(model, gain, v)
    best = scores.max(axis=0)
    slack = tol * np.maximum(1.0, np.abs(best))
    cur = scores[current, np.arange(model.n_states)]
    near = scores >= (best - slack)[None, :]
    first = np.argmax(near, axis=0)
    return np.where(cur >= best - slack, current, first).astype(current.dtype)


@dataclass
class IterationResult:
    policy: np.ndarray
    gain: float
    values: np.ndarray
    iterations: int
    history: List[float]
    residual: float


def policy_iteration(model: DecisionModel, initial: np.ndarray, anchor: int = 0,
                     max_iters: int = MAX_ITERS) -> IterationResult:
    """Iterate value determination and improvement until the policy repeats.

    ``history`` holds the objective ``-gain`` of every evaluated policy.
    """
    policy = np.asarray(initial).copy()
    history: List[float] = []
    for it in range(1, max_iters + 1):
        gain, v, resid = value_determination(model, policy, anchor)
        history.append(-gain)
        new = policy_improvement(model, gain, v, policy)
        if np.array_equal(new, policy):
            return IterationResult(policy, gain, v, it, history, resid)
        policy = new
    raise ConvergenceError(f"policy iteration did not converge in {max_iters} iterations")


def stationary_distribution(model: DecisionModel, policy: np.ndarray) -> np.ndarray:
    """Time-stationary probabilities of the induced chain (transient states get 0)."""
    q, _ = _generator(model, policy)
    ns = model.n_states
    keep = np.ones(ns)
    keep[-1] = 0.0
    # any single balance equation is implied by the rest; replace the last one
    ones = sp.csr_matrix((np.ones(ns), (np.full(ns, ns - 1), np.arange(ns))), shape=(ns, ns))
    a = sp.diags(keep) @ q.T + ones
    rhs = np.zeros(model.n_states)
    rhs[-1] = 1.0
    pi = spla.spsolve(a.tocsc(), rhs)
    pi = np.where(pi > 0, pi, 0.0)
    return pi / pi.sum()


# ---------------------------------------------------------------------------
# single-site model
# ---------------------------------------------------------------------------

class StateSpace:
    """All ``(n, m, a)`` under the caps, ordered by ``n``, then ``m + a``, then ``a``."""

    def __init__(self, caps: Caps):
        self.caps = caps
        top = caps.server_cap
        amax = top if caps.cap_a is None else min(caps.cap_a, top)
        pairs = [(s - a, a) for s in range(top + 1) for a in range(0, min(s, amax) + 1)]
        self.pairs = pairs
        states = [(n, m, a) for n in range(caps.cap_n + 1) for (m, a) in pairs]
        self.states = np.array(states, dtype=np.int64)
        self.n, self.m, self.a = self.states.T
        self._pair_index = {pa: i for i, pa in enumerate(pairs)}
        self.width = len(pairs)

    def __len__(self):
        return len(self.states)

    def index(self, n, m, a) -> int:
        if not 0 <= n <= self.caps.cap_n:
            raise KeyError((n, m, a))
        return n * self.width + self._pair_index[(m, a)]

    def index_array(self, n, m, a) -> np.ndarray:
        """Vectorised :meth:`index`; returns -1 where the state is outside the space."""
        lut = np.full((self.caps.server_cap + 2, self.caps.server_cap + 2), -1, dtype=np.int64)
        for (mm, aa), i in self._pair_index.items():
            lut[mm, aa] = i
        n = np.asarray(n)
        m = np.asarray(m)
        a = np.asarray(a)
        inside = (n >= 0) & (n <= self.caps.cap_n) & (m >= 0) & (a >= 0) & (m <= self.caps.server_cap + 1) \
            & (a <= self.caps.server_cap + 1)
        p = np.where(inside, lut[np.clip(m, 0, self.caps.server_cap + 1), np.clip(a, 0, self.caps.server_cap + 1)], -1)
        return np.where(p >= 0, n * self.width + p, -1)

    def __iter__(self):
        return (tuple(int(x) for x in s) for s in self.states)


def build_state_space(cap_n, cap_total, cap_a=None) -> StateSpace:
    return StateSpace(Caps(cap_n, cap_total, cap_a))


def post_action(m, a, act):
    """Server counts after applying ``act`` (vectorised)."""
    if act == Action.IA:
        return m, a + 1
    if act == Action.CA:
        return m, a - 1
    if act == Action.D:
        return m - 1, a
    return m, a


class SingleSiteModel(DecisionModel):
    """Transition and reward rates of the single-site decision process."""

    def __init__(self, p: SystemParams, caps: Caps):
        if p.delta <= 0:
            raise ParameterError("the decision model needs delta > 0")
        self.p = p
        self.caps = caps
        self.space = StateSpace(caps)
        self.n_states = len(self.space)
        self.n_actions = len(Action)
        self._cache: Dict[int, ActionArrays] = {}

    def feasible(self, act) -> np.ndarray:
        sp_, caps = self.space, self.caps
        n, m, a = sp_.n, sp_.m, sp_.a
        if act == Action.IA:
            ok = m + a < caps.server_cap
            if caps.cap_a is not None:
                ok &= a < caps.cap_a
        elif act == Action.CA:
            ok = a > 0
        elif act == Action.D:
            ok = (m > 0) & (a == 0)
        else:
            ok = np.ones_like(n, dtype=bool)
        return ok

    def arrays(self, act) -> ActionArrays:
        act = int(act)
        hit = self._cache.get(act)
        if hit is not None:
            return hit
        p, sp_ = self.p, self.space
        n, m, a = sp_.n, sp_.m, sp_.a
        m2, a2 = post_action(m, a, act)
        ok = self.feasible(act)
        mm, aa = np.where(ok, m2, 0), np.where(ok, a2, 0)
        lam = np.where(n < self.caps.cap_n, p.lam, 0.0)
        rate = np.stack([lam, np.minimum(n, mm) * p.mu, aa / p.delta], axis=1)
        target = np.stack([
            sp_.index_array(n + 1, mm, aa),
            sp_.index_array(n - 1, mm, aa),
            sp_.index_array(n, mm + 1, aa - 1),
        ], axis=1)
        target = np.where(rate > 0, target, -1)
        ok &= rate.sum(axis=1) > 0
        reward = -(p.omega * n + (mm + aa) * p.mu)
        out = ActionArrays(ok, reward.astype(float), target, rate)
        self._cache[act] = out
        return out


def transitions(state, act, p: SystemParams, caps: Caps):
    """Outgoing transitions and reward rate of ``act`` taken on entering ``state``.

    Returns ``(list of ((n, m, a), rate), reward)``; raises :class:`ParameterError`
    if the action is not allowed there.
    """
    model = SingleSiteModel(p, caps)
    idx = model.space.index(*state)
    arr = model.arrays(Action[act] if isinstance(act, str) else act)
    if not arr.feasible[idx]:
        raise ParameterError(f"action {Action(act).name} not allowed in state {tuple(state)}")
    out = []
    for t, r in zip(arr.target[idx], arr.rate[idx]):
        if t >= 0 and r > 0:
            out.append((tuple(int(x) for x in model.space.states[t]), float(r)))
    return out, float(arr.reward[idx])


# ---------------------------------------------------------------------------
# policy tables
# ---------------------------------------------------------------------------

@dataclass
class PolicyTable:
    """Action chosen in every state of a capped single-site space."""

    caps: Caps
    actions: np.ndarray
    space: StateSpace = field(init=False, repr=False)

    def __post_init__(self):
        self.space = StateSpace(self.caps)
        self.actions = np.asarray(self.actions, dtype=np.int8)
        if self.actions.shape != (len(self.space),):
            raise ParameterError("action array does not match the state space")

    def action(self, n, m, a) -> Action:
        return Action(int(self.actions[self.space.index(n, m, a)]))

    def __eq__(self, other):
        return isinstance(other, PolicyTable) and self.caps == other.caps and np.array_equal(self.actions, other.actions)

    def to_text(self, p: Optional[SystemParams] = None, extra: Optional[dict] = None) -> str:
        """Line-oriented form: ``#`` header lines, then ``n m a action`` rows."""
        head = ["# dynalloc single-site policy table"]
        if p is not None:
            head.append(f"# lam={p.lam!r} mu={p.mu!r} delta={p.delta!r} omega={p.omega!r}")
        cap_a = "none" if self.caps.cap_a is None else self.caps.cap_a
        head.append(f"# cap_n={self.caps.cap_n} cap_total={self.caps.cap_total} cap_a={cap_a}")
        for k, v in (extra or {}).items():
            head.append(f"# {k}={v!r}" if isinstance(v, float) else f"# {k}={v}")
        head.append("n m a action")
        rows = [f"{n} {m} {a} {Action(int(x)).name}" for (n, m, a), x in zip(self.space, self.actions)]
        return "\n".join(head + rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Tuple["PolicyTable", dict]:
        """Inverse of :meth:`to_text`; also returns the parsed header fields."""
        meta = _parse_header(text)
        try:
            caps = Caps(int(meta["cap_n"]), int(meta["cap_total"]),
                        None if meta.get("cap_a", "none") == "none" else int(meta["cap_a"]))
        except KeyError as exc:
            raise ParameterError(f"policy table header lacks {exc}") from exc
        space = StateSpace(caps)
        actions = np.full(len(space), -1, dtype=np.int8)
        for line in _body(text):
            n, m, a, name = line.split()
            actions[space.index(int(n), int(m), int(a))] = Action[name]
        if (actions < 0).any():
            raise ParameterError("policy table does not cover every state")
        return cls(caps, actions), meta


def _parse_header(text):
    meta = {}
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
    return meta


def _body(text):
    seen_cols = False
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if not seen_cols:
            seen_cols = True
            if not s[0].isdigit():
                continue
        yield s


def params_from_header(meta) -> SystemParams:
    return SystemParams(float(meta["lam"]), float(meta["mu"]), float(meta["delta"]), float(meta["omega"]))


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def reactive_initial_policy(space: StateSpace) -> np.ndarray:
    """Start policy steering ``m + a`` towards ``min(n, server cap)``, one change per epoch."""
    caps = space.caps
    n, m, a = space.n, space.m, space.a
    target = np.minimum(n, caps.server_cap)
    s = m + a
    can_ia = s < caps.server_cap
    if caps.cap_a is not None:
        can_ia &= a < caps.cap_a
    pol = np.full(len(space), Action.NC, dtype=np.int8)
    pol[(s < target) & can_ia] = Action.IA
    over = s > target
    pol[over & (a > 0)] = Action.CA
    pol[over & (a == 0) & (m > 0)] = Action.D
    # NC with nothing allocated at the n cap has no way out
    stuck = (n == caps.cap_n) & (m == 0) & (a == 0)
    pol[stuck] = Action.IA
    return pol


def _extend(table: PolicyTable, space: StateSpace, model: SingleSiteModel) -> np.ndarray:
    """Warm start on a larger space: reuse actions, copying the top row upwards."""
    base = reactive_initial_policy(space)
    old = table.caps.cap_n
    out = base.copy()
    for act in Action:
        arr = model.arrays(act)
        src_n = np.minimum(space.n, old)
        idx = table.space.index_array(src_n, space.m, space.a)
        have = idx >= 0
        prev = np.full(len(space), -1)
        prev[have] = table.actions[idx[have]]
        use = have & (prev == act) & arr.feasible
        out[use] = act
    return out


@dataclass
class SolveResult:
    policy: PolicyTable
    avg_reward: float
    values: np.ndarray
    iterations: int
    history: List[float]
    params: SystemParams
    residual: float = 0.0
    cap_trace: List[Tuple[int, float]] = field(default_factory=list)
    stationary: Optional[np.ndarray] = None

    @property
    def objective(self) -> float:
        return -self.avg_reward

    @property
    def caps(self) -> Caps:
        return self.policy.caps


def initial_cap_n(p: SystemParams, cap_total: int) -> int:
    rho = p.lam / (p.mu * cap_total)
    if rho >= 1:
        return max(20, int(math.ceil(2 * p.lam / p.mu + 10)))
    return max(20, int(math.ceil(10.0 / (1.0 - rho))))


def solve_fixed(p: SystemParams, caps: Caps, initial=None, max_iters=MAX_ITERS) -> SolveResult:
    """Policy iteration on one fixed truncation."""
    model = SingleSiteModel(p, caps)
    start = reactive_initial_policy(model.space) if initial is None else np.asarray(initial, dtype=np.int8)
    anchor = model.space.index(0, 0, 0)
    res = policy_iteration(model, start, anchor, max_iters)
    return SolveResult(PolicyTable(caps, res.policy), res.gain, res.values, res.iterations, res.history, p,
                       res.residual, [(caps.cap_n, -res.gain)])


def solve_optimal(p: SystemParams, cap_total: int = 1, cap_a: Optional[int] = None, cap_n: Optional[int] = None,
                  max_iters: int = MAX_ITERS, rtol: float = CAP_RTOL, max_doublings: int = 8,
                  with_stationary: bool = False) -> SolveResult:
    """Optimal policy and objective.

    With ``cap_n=None`` the request cap starts at ``max(20, ceil(10/(1-rho)))``
    and doubles until the objective moves by less than ``rtol`` (relative); the
    result at the larger cap is returned.  A given ``cap_n`` is used as is.
    """
    if cap_n is not None:
        res = solve_fixed(p, Caps(cap_n, cap_total, cap_a), max_iters=max_iters)
    else:
        n0 = initial_cap_n(p, cap_total)
        prev = solve_fixed(p, Caps(n0, cap_total, cap_a), max_iters=max_iters)
        trace = list(prev.cap_trace)
        for _ in range(max_doublings):
            caps = prev.caps.with_cap_n(2 * prev.caps.cap_n)
            model = SingleSiteModel(p, caps)
            res = solve_fixed(p, caps, _extend(prev.policy, model.space, model), max_iters)
            trace += res.cap_trace
            res.iterations += prev.iterations
            if abs(res.objective - prev.objective) <= rtol * abs(res.objective):
                break
            prev = res
        else:
            raise ConvergenceError(f"objective still moving after {max_doublings} cap doublings")
        res.cap_trace = trace
    if with_stationary:
        res.stationary = stationary_distribution(SingleSiteModel(p, res.caps), res.policy.actions)
    return res


def stationary_metrics(table: PolicyTable, p: SystemParams) -> Metrics:
    """``R`` (Little's law with the offered rate) and ``C`` of the chain induced by ``table``.

    ``objective`` of the result equals the negated gain of the table.
    """
    model = SingleSiteModel(p, table.caps)
    pi = stationary_distribution(model, table.actions)
    sp_ = model.space
    post_m = sp_.m.copy()
    post_a = sp_.a.copy()
    for act in Action:
        sel = table.actions == act
        post_m[sel], post_a[sel] = post_action(sp_.m[sel], sp_.a[sel], act)
    mean_n = float(pi @ sp_.n)
    return Metrics(r=mean_n / p.lam, c=p.mu * float(pi @ (post_m + post_a)))


def evaluate_table(table: PolicyTable, p: SystemParams) -> float:
    """Objective of a fixed table via value determination."""
    model = SingleSiteModel(p, table.caps)
    gain, _, _ = value_determination(model, table.actions.astype(np.int64), model.space.index(0, 0, 0))
    return -gain


def forced_always_on(caps: Caps, servers: Optional[int] = None) -> PolicyTable:
    """Table that allocates up to ``servers`` (default: the server cap) and never releases them."""
    space = StateSpace(caps)
    k = caps.server_cap if servers is None else servers
    s = space.m + space.a
    can = s < k
    if caps.cap_a is not None:
        can &= space.a < caps.cap_a
    acts = np.where(can, Action.IA, Action.NC).astype(np.int8)
    return PolicyTable(caps, acts)
