"""Request-level discrete-event simulator.

Each policy is driven by its own controller over a shared engine: Poisson
arrivals, per-server exponential service, per-allocation exponential setup
and (for holding-on) Erlang-stage or fixed timers.  Events live in a binary
heap; cancelled events are skipped lazily through per-object tokens.

Estimates come from independent replications with warmup deletion.  Each
replication draws from its own Philox stream spawned from the configured
seed, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import stats

from .core import (DETERMINISTIC, AlwaysOn, Batching, DualBothDynamic, DualOneAlways, HoldOn, Metrics,
                   ParameterError, ProactiveUnlimited, ReactiveUnlimited, ServerPerRequest, SmdpTable,
                   StateDepRates, SystemParams, check_stable, stability_limit)

RNG_NAME = "Philox"

ARRIVAL, SETUP, DEPART, TIMER, ARRIVAL2 = range(5)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 12345
    warmup: float = 1e4
    horizon: float = 1e5
    replications: int = 20

    def __post_init__(self):
        if not (self.horizon > self.warmup >= 0):
            raise ParameterError("need horizon > warmup >= 0")
        if self.replications < 2:
            raise ParameterError("need at least 2 replications")


@dataclass
class ReplicationStats:
    replication: int
    r: float
    c: float
    objective: float
    mean_n: float
    throughput: float
    completed: int


@dataclass
class MetricsEstimate:
    """Across-replication means and 95% confidence half-widths."""

    r_mean: float
    r_ci_halfwidth: float
    c_mean: float
    c_ci_halfwidth: float
    objective_mean: float
    objective_ci_halfwidth: float
    replications: List[ReplicationStats] = field(repr=False, default_factory=list)
    seed: int = 0
    rng: str = RNG_NAME

    @property
    def n(self) -> int:
        return len(self.replications)

    def _se(self, half):
        return half / stats.t.ppf(0.975, self.n - 1)

    @property
    def r_se(self) -> float:
        return self._se(self.r_ci_halfwidth)

    @property
    def c_se(self) -> float:
        return self._se(self.c_ci_halfwidth)

    @property
    def objective_se(self) -> float:
        return self._se(self.objective_ci_halfwidth)

    def as_metrics(self) -> Metrics:
        return Metrics(self.r_mean, self.c_mean)

    def to_csv(self) -> str:
        """Per-replication rows: ``replication,R,C,objective``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "R", "C", "objective"])
        for rep in self.replications:
            w.writerow([rep.replication, repr(rep.r), repr(rep.c), repr(rep.objective)])
        return buf.getvalue()


def _summarise(reps: List[ReplicationStats], seed: int) -> MetricsEstimate:
    def mean_half(xs):
        xs = np.asarray(xs, dtype=float)
        half = stats.t.ppf(0.975, len(xs) - 1) * xs.std(ddof=1) / math.sqrt(len(xs))
        return float(xs.mean()), float(half)

    r, rh = mean_half([x.r for x in reps])
    c, ch = mean_half([x.c for x in reps])
    o, oh = mean_half([x.objective for x in reps])
    return MetricsEstimate(r, rh, c, ch, o, oh, reps, seed)


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

class _Stream:
    """Buffered standard exponentials and uniforms from one generator."""

    __slots__ = ("rng", "e", "ei", "u", "ui")

    def __init__(self, rng: np.random.Generator, size: int = 1 << 14):
        self.rng = rng
        self.e = rng.standard_exponential(size).tolist()
        self.ei = 0
        self.u = rng.random(size).tolist()
        self.ui = 0

    def exp(self) -> float:
        i = self.ei
        if i == len(self.e):
            self.e = self.rng.standard_exponential(len(self.e)).tolist()
            i = 0
        self.ei = i + 1
        return self.e[i]

    def uniform(self) -> float:
        i = self.ui
        if i == len(self.u):
            self.u = self.rng.random(len(self.u)).tolist()
            i = 0
        self.ui = i + 1
        return self.u[i]


class Server:
    __slots__ = ("rate", "cost", "state", "token", "req", "site")

    SETUP, IDLE, BUSY = 0, 1, 2

    def __init__(self, rate, cost, site=0):
        self.rate = rate
        self.cost = cost
        self.state = Server.SETUP
        self.token = 0
        self.req = None
        self.site = site


class Engine:
    """Event loop, time-average accounting and a FIFO pool of servers.

    Controllers subclass this and implement the ``on_*`` hooks.
    """

    n_sites = 1

    def __init__(self, p: SystemParams, stream: _Stream, warmup: float, horizon: float):
        self.p = p
        self.rs = stream
        self.warmup = warmup
        self.horizon = horizon
        self.t = 0.0
        self.heap: list = []
        self.seq = 0
        self.queues = [deque() for _ in range(self.n_sites)]
        self.servers = [{} for _ in range(self.n_sites)]  # insertion-ordered for reproducibility
        self.nsys = [0] * self.n_sites
        self.cost_rate = 0.0
        self.extra_rate = 0.0  # objective-only charge rate (two-site transfer term)
        self._last = 0.0
        self.area_n = 0.0
        self.area_c = 0.0
        self.area_x = 0.0
        self.sojourn = 0.0
        self.done = 0
        self.arrivals = 0

    # --- bookkeeping -----------------------------------------------------
    def schedule(self, delay, kind, obj=None, token=0):
        self.seq += 1
        heapq.heappush(self.heap, (self.t + delay, self.seq, kind, obj, token))

    def _advance(self, t):
        lo = self._last if self._last > self.warmup else self.warmup
        if t > lo:
            dt = t - lo
            self.area_n += sum(self.nsys) * dt
            self.area_c += self.cost_rate * dt
            self.area_x += self.extra_rate * dt
        self._last = t
        self.t = t

    def record(self, arrived, extra=0.0):
        if self.t >= self.warmup:
            self.sojourn += self.t - arrived + extra
            self.done += 1

    # --- server pool -----------------------------------------------------
    def allocate(self, rate, cost=None, site=0, ready=False):
        s = Server(rate, self.p.mu if cost is None else cost, site)
        self.servers[site][s] = None
        self.cost_rate += s.cost
        if ready:
            s.state = Server.IDLE
        else:
            d = self.p.delta
            if d == 0:
                s.state = Server.IDLE
                self.on_ready(s)
            else:
                self.schedule(d * self.rs.exp(), SETUP, s, s.token)
        return s

    def release(self, s: Server):
        """Deallocate (or cancel the setup of) ``s``; a request it held goes back to the queue head."""
        s.token += 1
        if s.state == Server.BUSY:
            self.queues[s.site].appendleft(s.req)
            s.req = None
        self.servers[s.site].pop(s, None)
        self.cost_rate -= s.cost

    def serve(self, s: Server) -> bool:
        q = self.queues[s.site]
        if not q:
            s.state = Server.IDLE
            return False
        s.req = q.popleft()
        s.state = Server.BUSY
        s.token += 1
        self.schedule(self.rs.exp() / s.rate, DEPART, s, s.token)
        return True

    def count(self, state, site=0):
        return sum(1 for s in self.servers[site] if s.state == state)

    def pick(self, state, site=0):
        for s in self.servers[site]:
            if s.state == state:
                return s
        return None

    def pick_last_setup(self, site=0):
        for s in reversed(self.servers[site]):
            if s.state == Server.SETUP:
                return s
        return None

    # --- main loop -------------------------------------------------------
    def start(self):
        self.schedule(self.rs.exp() / self.p.lam, ARRIVAL)

    def run(self) -> ReplicationStats:
        self.start()
        heap = self.heap
        pop = heapq.heappop
        handlers = {ARRIVAL: self._arrival, SETUP: self._setup, DEPART: self._depart, TIMER: self.on_timer,
                    ARRIVAL2: self._arrival2}
        horizon = self.horizon
        while heap:
            t, _, kind, obj, tok = pop(heap)
            if t > horizon:
                break
            if obj is not None and getattr(obj, "token", tok) != tok:
                continue
            self._advance(t)
            handlers[kind](obj)
        self._advance(horizon)
        span = horizon - self.warmup
        r = self.sojourn / self.done if self.done else math.nan
        c = self.area_c / span
        return ReplicationStats(0, r, c, self.objective(r, c, span), self.area_n / span, self.arrivals / span,
                                self.done)

    def objective(self, r, c, span):
        return self.p.omega * self.p.lam * r + c

    def _arrival(self, _):
        self.schedule(self.rs.exp() / self.p.lam, ARRIVAL)
        if self.t >= self.warmup:
            self.arrivals += 1
        self.nsys[0] += 1
        self.queues[0].append(self.t)
        self.on_arrival()

    def _arrival2(self, _):  # pragma: no cover - overridden by two-site controllers
        raise NotImplementedError

    def _setup(self, s: Server):
        s.state = Server.IDLE
        self.on_ready(s)

    def _depart(self, s: Server):
        self.record(s.req)
        s.req = None
        s.token += 1
        self.nsys[s.site] -= 1
        s.state = Server.IDLE
        self.on_depart(s)

    # --- hooks -----------------------------------------------------------
    def on_arrival(self):
        raise NotImplementedError

    def on_ready(self, s):
        self.serve(s)

    def on_depart(self, s):
        self.serve(s)

    def on_timer(self, obj):
        pass


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------

class AlwaysOnSim(Engine):
    def __init__(self, p, stream, warmup, horizon, servers=1):
        super().__init__(p, stream, warmup, horizon)
        for _ in range(servers):
            self.allocate(p.mu, ready=True)

    def on_arrival(self):
        s = self.pick(Server.IDLE)
        if s is not None:
            self.serve(s)


class _Timer:
    __slots__ = ("token", "stage")

    def __init__(self):
        self.token = 0
        self.stage = 0


class SingleServerSim(Engine):
    """One server with optional holding-on timer, batching threshold and state-dependent speed.

    The server speed is ``rates[min(n, c) - 1]``; each request carries an
    exponential amount of work with mean one and progress is tracked between
    events.  Cost accrues at ``rates[-1]`` while the server is allocated.
    """

    def __init__(self, p, stream, warmup, horizon, rates=None, k=1, t=0.0, b=1):
        super().__init__(p, stream, warmup, horizon)
        self.rates = tuple(rates) if rates is not None else (p.mu,)
        self.k, self.hold, self.b = k, t, b
        self.srv: Optional[Server] = None
        self.timer = _Timer()
        self.work = 0.0
        self.speed = 0.0
        self.stamp = 0.0

    def _speed(self):
        n = self.nsys[0]
        return self.rates[min(n, len(self.rates)) - 1] if n else 0.0

    def _reschedule(self):
        """Re-plan the head request's completion after the speed may have changed."""
        s = self.srv
        if s is None or s.state != Server.BUSY:
            return
        self.work -= self.speed * (self.t - self.stamp)
        self.stamp = self.t
        self.speed = self._speed()
        s.token += 1
        self.schedule(max(self.work, 0.0) / self.speed, DEPART, s, s.token)

    def _start_service(self):
        s = self.srv
        q = self.queues[0]
        if not q:
            return False
        s.req = q.popleft()
        s.state = Server.BUSY
        self.work = self.rs.exp()
        self.stamp = self.t
        self.speed = self._speed()
        s.token += 1
        self.schedule(self.work / self.speed, DEPART, s, s.token)
        return True

    def on_arrival(self):
        s = self.srv
        if s is None:
            if self.nsys[0] >= self.b:
                self.srv = self.allocate(self.rates[-1], cost=self.rates[-1])
        elif s.state == Server.IDLE:
            self.timer.token += 1
            self._start_service()
        elif s.state == Server.BUSY:
            self._reschedule()

    def on_ready(self, s):
        self._start_service()

    def on_depart(self, s):
        if self._start_service():
            return
        # idle: hold on or release
        if self.hold == 0:
            self.release(s)
            self.srv = None
        elif math.isinf(self.hold):
            pass
        else:
            tm = self.timer
            tm.token += 1
            if self.k == DETERMINISTIC:
                tm.stage = 1
                self.schedule(self.hold, TIMER, tm, tm.token)
            else:
                tm.stage = int(self.k)
                self.schedule(self.hold / self.k * self.rs.exp(), TIMER, tm, tm.token)

    def on_timer(self, tm):
        tm.stage -= 1
        if tm.stage > 0:
            self.schedule(self.hold / self.k * self.rs.exp(), TIMER, tm, tm.token)
            return
        tm.token += 1
        self.release(self.srv)
        self.srv = None


class DualOneAlwaysSim(Engine):
    """Baseline server (rate ``mu1``) always on; extra server (rate ``mu2 - mu1``) between thresholds."""

    def __init__(self, p, stream, warmup, horizon, l, h, mu1, mu2):
        super().__init__(p, stream, warmup, horizon)
        if l < 2:
            raise ParameterError("the two-server simulation of this policy needs l >= 2")
        self.l, self.h = l, h
        self.extra_rate_ = mu2 - mu1
        self.base = self.allocate(mu1, cost=mu1, ready=True)
        self.extra: Optional[Server] = None

    def on_arrival(self):
        if self.base.state == Server.IDLE:
            self.serve(self.base)
        elif self.extra is not None and self.extra.state == Server.IDLE:
            self.serve(self.extra)
        if self.extra is None and self.nsys[0] >= self.h:
            self.extra = self.allocate(self.extra_rate_, cost=self.extra_rate_)

    def on_depart(self, s):
        if self.extra is not None and self.nsys[0] < self.l:
            x = self.extra
            self.extra = None
            self.release(x)
        if s is self.extra or s is self.base:
            self.serve(s)
        if self.base.state == Server.IDLE:
            self.serve(self.base)


class DualBothDynamicSim(Engine):
    """Two rate-``mu`` servers; allocations track ``min(n, 2)``."""

    def _balance(self):
        want = min(self.nsys[0], 2)
        pool = self.servers[0]
        while len(pool) > want:
            s = self.pick(Server.SETUP) or self.pick(Server.IDLE)
            if s is None:  # cannot happen: more servers than requests leaves one not busy
                break
            self.release(s)
        while len(pool) < want:
            self.allocate(self.p.mu)

    def on_arrival(self):
        s = self.pick(Server.IDLE)
        if s is not None:
            self.serve(s)
        self._balance()

    def on_depart(self, s):
        self.serve(s)
        self._balance()


class PerRequestSim(Engine):
    """A dedicated server is allocated for each request and released after its service."""

    def on_arrival(self):
        self.allocate(self.p.mu)

    def on_ready(self, s):
        self.serve(s)

    def on_depart(self, s):
        self.release(s)


class ReactiveSim(Engine):
    """Up to ``s`` allocations in progress, one per waiting request; freed servers take waiting requests."""

    def __init__(self, p, stream, warmup, horizon, s=1):
        super().__init__(p, stream, warmup, horizon)
        self.s = s
        self.setups = 0

    def _balance(self):
        want = min(len(self.queues[0]), self.s)
        while self.setups > want:
            self.release(self.pick_last_setup())
            self.setups -= 1
        while self.setups < want:
            self.setups += 1
            self.allocate(self.p.mu)

    def on_arrival(self):
        self._balance()

    def on_ready(self, s):
        self.setups -= 1
        if not self.serve(s):
            self.release(s)
        self._balance()

    def on_depart(self, s):
        if not self.serve(s):
            self.release(s)
        self._balance()


class ProactiveSim(Engine):
    """Keeps one spare allocated server; a new allocation starts whenever all allocated servers are busy."""

    def __init__(self, p, stream, warmup, horizon):
        super().__init__(p, stream, warmup, horizon)
        self.setup: Optional[Server] = None
        self.allocate(p.mu, ready=True)

    def _balance(self):
        idle = [s for s in self.servers[0] if s.state == Server.IDLE]
        while len(idle) > 1:
            self.release(idle.pop())
        if idle:
            if self.setup is not None:
                self.release(self.setup)
                self.setup = None
        elif self.setup is None:
            self.setup = self.allocate(self.p.mu)

    def on_arrival(self):
        s = self.pick(Server.IDLE)
        if s is not None:
            self.serve(s)
        self._balance()

    def on_ready(self, s):
        self.setup = None
        self.serve(s)
        self._balance()

    def on_depart(self, s):
        self.serve(s)
        self._balance()


# ---------------------------------------------------------------------------
# policy-table replay
# ---------------------------------------------------------------------------

def _apply_change(eng: Engine, act: int, site: int):
    from .smdp import Action
    if act == Action.IA:
        eng.allocate(eng.p.mu, site=site)
    elif act == Action.CA:
        eng.release(eng.pick_last_setup(site))
    elif act == Action.D:
        s = eng.pick(Server.IDLE, site) or eng.pick(Server.BUSY, site)
        eng.release(s)


class TableSim(Engine):
    """Replays a single-site :class:`~dynalloc.smdp.PolicyTable` at every decision epoch."""

    def __init__(self, p, stream, warmup, horizon, table):
        super().__init__(p, stream, warmup, horizon)
        self.table = table
        self.cap_n = table.caps.cap_n
        self.decide()

    def state(self):
        pool = self.servers[0]
        a = sum(1 for s in pool if s.state == Server.SETUP)
        return self.nsys[0], len(pool) - a, a

    def decide(self):
        try:
            act = int(self.table.actions[self.table.space.index(*self.state())])
        except KeyError as exc:
            raise ParameterError(f"policy table has no entry for state {self.state()}") from exc
        _apply_change(self, act, 0)
        s = self.pick(Server.IDLE)
        if s is not None and self.queues[0]:
            self.serve(s)

    def _arrival(self, _):
        self.schedule(self.rs.exp() / self.p.lam, ARRIVAL)
        if self.nsys[0] >= self.cap_n:
            return
        if self.t >= self.warmup:
            self.arrivals += 1
        self.nsys[0] += 1
        self.queues[0].append(self.t)
        s = self.pick(Server.IDLE)
        if s is not None:
            self.serve(s)
        self.decide()

    def on_ready(self, s):
        self.serve(s)
        self.decide()

    def on_depart(self, s):
        self.serve(s)
        self.decide()


class TwoSiteTableSim(Engine):
    """Replays a two-site table; routed requests carry the mean transfer time in their response."""

    n_sites = 2

    def __init__(self, tp, stream, warmup, horizon, table):
        base = tp.base
        super().__init__(SystemParams(tp.lam1 + tp.lam2, base.mu, base.delta, base.omega), stream, warmup, horizon)
        self.tp = table.tp
        self.table = table
        self.route12 = False
        self.remote = set()
        self.decide()

    def start(self):
        if self.tp.lam1 > 0:
            self.schedule(self.rs.exp() / self.tp.lam1, ARRIVAL)
        if self.tp.lam2 > 0:
            self.schedule(self.rs.exp() / self.tp.lam2, ARRIVAL2)

    def state(self):
        out = []
        for site in (0, 1):
            pool = self.servers[site]
            a = sum(1 for s in pool if s.state == Server.SETUP)
            out += [self.nsys[site], len(pool) - a, a]
        return out

    def decide(self):
        from .routing import PROVISIONING
        st = self.state()
        try:
            act = int(self.table.actions[self.table.space.index(*st)])
        except KeyError as exc:
            raise ParameterError(f"two-site table has no entry for state {tuple(st)}") from exc
        k, r = divmod(act, 2)
        c1, c2 = PROVISIONING[k][1]
        _apply_change(self, int(c1), 0)
        _apply_change(self, int(c2), 1)
        self.route12 = bool(r)
        self.extra_rate = self.tp.omega * self.tp.lam1 * self.tp.d_r if r else 0.0
        for site in (0, 1):
            s = self.pick(Server.IDLE, site)
            if s is not None and self.queues[site]:
                self.serve(s)

    def _admit(self, site, remote):
        if self.nsys[0] + self.nsys[1] >= self.tp.cap:
            return
        if self.t >= self.warmup:
            self.arrivals += 1
        self.nsys[site] += 1
        stamp = (self.t, remote)
        self.queues[site].append(stamp)
        s = self.pick(Server.IDLE, site)
        if s is not None:
            self.serve(s)
        self.decide()

    def _arrival(self, _):
        self.schedule(self.rs.exp() / self.tp.lam1, ARRIVAL)
        self._admit(1 if self.route12 else 0, self.route12)

    def _arrival2(self, _):
        self.schedule(self.rs.exp() / self.tp.lam2, ARRIVAL2)
        self._admit(1, False)

    def _depart(self, s):
        arrived, remote = s.req
        self.record(arrived, self.tp.d_r if remote else 0.0)
        s.req = None
        s.token += 1
        self.nsys[s.site] -= 1
        s.state = Server.IDLE
        self.serve(s)
        self.decide()

    def on_ready(self, s):
        self.serve(s)
        self.decide()

    def objective(self, r, c, span):
        # time-average reward: omega (N + transfer charge) + cost
        return self.tp.omega * self.area_n / span + self.area_x / span + c


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def _factory(policy, p: SystemParams) -> Callable:
    if isinstance(policy, AlwaysOn):
        check_stable(p.lam, stability_limit(policy, p), "always-on")
        return lambda st, w, h: AlwaysOnSim(p, st, w, h, policy.servers)
    if isinstance(policy, HoldOn):
        check_stable(p.lam, p.mu, "single server")
        return lambda st, w, h: SingleServerSim(p, st, w, h, (p.mu,), policy.k, policy.t, 1)
    if isinstance(policy, Batching):
        check_stable(p.lam, p.mu, "single server")
        return lambda st, w, h: SingleServerSim(p, st, w, h, (p.mu,), 1, 0.0, policy.b)
    if isinstance(policy, StateDepRates):
        check_stable(p.lam, policy.rates[-1], "state-dependent server")
        return lambda st, w, h: SingleServerSim(p, st, w, h, policy.rates, policy.k, policy.t, 1)
    if isinstance(policy, DualOneAlways):
        mu1, mu2 = policy.rates(p)
        check_stable(p.lam, mu2, "dual one-always")
        return lambda st, w, h: DualOneAlwaysSim(p, st, w, h, policy.l, policy.h, mu1, mu2)
    if isinstance(policy, DualBothDynamic):
        check_stable(p.lam, 2 * p.mu, "dual both-dynamic")
        return lambda st, w, h: DualBothDynamicSim(p, st, w, h)
    if isinstance(policy, ServerPerRequest):
        return lambda st, w, h: PerRequestSim(p, st, w, h)
    if isinstance(policy, ReactiveUnlimited):
        return lambda st, w, h: ReactiveSim(p, st, w, h, policy.s)
    if isinstance(policy, ProactiveUnlimited):
        return lambda st, w, h: ProactiveSim(p, st, w, h)
    if isinstance(policy, SmdpTable):
        return lambda st, w, h: TableSim(p, st, w, h, policy.table)
    raise TypeError(f"cannot simulate {policy!r}")


def _streams(cfg: SimConfig):
    seq = np.random.SeedSequence(cfg.seed)
    for child in seq.spawn(cfg.replications):
        yield _Stream(np.random.Generator(np.random.Philox(child)))


def _run(make, cfg: SimConfig, csv_out=None) -> MetricsEstimate:
    reps = []
    for i, stream in enumerate(_streams(cfg)):
        rep = make(stream, cfg.warmup, cfg.horizon).run()
        rep.replication = i
        reps.append(rep)
    est = _summarise(reps, cfg.seed)
    if csv_out is not None:
        text = est.to_csv()
        if hasattr(csv_out, "write"):
            csv_out.write(text)
        else:
            with open(csv_out, "w", newline="") as fh:
                fh.write(text)
    return est


def simulate(policy, p: SystemParams, cfg: SimConfig = SimConfig(), csv_out=None) -> MetricsEstimate:
    """Estimate ``R`` and ``C`` of ``policy``; ``csv_out`` (path or file) receives per-replication rows."""
    return _run(_factory(policy, p), cfg, csv_out)


def simulate_policy_table(table, params, cfg: SimConfig = SimConfig(), csv_out=None) -> MetricsEstimate:
    """Replay a single-site :class:`PolicyTable` (with ``SystemParams``) or a two-site table.

    For two-site tables ``params`` is the :class:`~dynalloc.routing.TwoSiteParams`
    and the objective estimate is the time average ``omega (Q) + C1 + C2``.
    """
    from .routing import TwoSiteTable
    if isinstance(table, TwoSiteTable):
        return _run(lambda st, w, h: TwoSiteTableSim(params, st, w, h, table), cfg, csv_out)
    return _run(lambda st, w, h: TableSim(params, st, w, h, table), cfg, csv_out)
