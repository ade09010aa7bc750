"""Closed-form evaluators for the simple allocation policies.

Every evaluator returns :class:`~dynalloc.core.Metrics`.  Infinite sums are
evaluated through geometric closed forms; truncation is used only by the
``*_state_probs`` diagnostics, which expose the per-state stationary
probabilities of each model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Hashable, List

import numpy as np

from .core import (DETERMINISTIC, AlwaysOn, Batching, DualBothDynamic, DualOneAlways, HoldOn, Metrics,
                   ParameterError, ProactiveUnlimited, ReactiveUnlimited, ServerPerRequest, SmdpTable,
                   StateDepRates, SystemParams, check_stable, objective)

#: Relative closeness of a defining denominator to zero that selects a limiting branch.
DEGENERATE_RTOL = 1e-9
#: Default tail mass left out of diagnostic state-probability vectors.
TAIL_EPS = 1e-9


@dataclass(frozen=True)
class CharRoots:
    r1: float
    r2: float


@dataclass
class StateProbVector:
    """Truncated stationary probabilities keyed by state label."""

    labels: List[Hashable]
    probs: np.ndarray
    index: Dict[Hashable, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.index = {s: i for i, s in enumerate(self.labels)}

    def __getitem__(self, label):
        return self.probs[self.index[label]]

    def __len__(self):
        return len(self.labels)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def as_dict(self):
        return dict(zip(self.labels, self.probs.tolist()))


@dataclass(frozen=True)
class SingleOptimum:
    """Optimal single-server objective and the policy attaining it.

    ``batch_size`` is the minimiser of the batching term even when
    :class:`AlwaysOn` wins overall.
    """

    value: float
    policy: object
    batch_size: int
    batch_term: float


def _inv(delta):
    return math.inf if delta == 0 else 1.0 / delta


def char_roots(lam, mu1, delta) -> CharRoots:
    """Roots of ``x**2 - ((lam + mu1 + 1/delta)/mu1) x + lam/mu1``.

    The larger root is taken from the ``+`` branch and the smaller one from
    Vieta's product, which avoids cancellation when ``1/delta`` is small.
    """
    if not (lam > 0 and mu1 > 0 and delta > 0):
        raise ParameterError("char_roots needs lam, mu1, delta > 0")
    b = (lam + mu1 + 1.0 / delta) / mu1
    c = lam / mu1
    r2 = 0.5 * (b + math.sqrt(b * b - 4.0 * c))
    return CharRoots(c / r2, r2)


# ---------------------------------------------------------------------------
# baselines and single server
# ---------------------------------------------------------------------------

def erlang_c(servers: int, a: float) -> float:
    """Probability of waiting in M/M/``servers`` with offered load ``a``."""
    b = 1.0
    for j in range(1, servers + 1):
        b = a * b / (j + a * b)
    rho = a / servers
    return b / (1.0 - rho * (1.0 - b))


def mmk_baseline(p: SystemParams, servers: int = 1) -> Metrics:
    """All ``servers`` permanently allocated (M/M/k)."""
    if servers < 1:
        raise ParameterError("servers must be >= 1")
    check_stable(p.lam, servers * p.mu, f"M/M/{servers}")
    wait = erlang_c(servers, p.lam / p.mu) / (servers * p.mu - p.lam)
    return Metrics(r=1.0 / p.mu + wait, c=servers * p.mu)


def _erlang_factor(lam, k, t):
    """``(lam t / k + 1)**k``, or ``exp(lam t)`` in the deterministic limit."""
    if math.isinf(t):
        return math.inf
    if k == DETERMINISTIC:
        return math.exp(lam * t)
    return math.exp(k * math.log1p(lam * t / k))


def single_hold_on(p: SystemParams, k=1, t=0.0) -> Metrics:
    """Deallocate after an Erlang-``k`` holding-on time of mean ``t``; reallocate on arrival."""
    HoldOn(k, t)
    check_stable(p.lam, p.mu, "single server")
    lam, mu, d = p.lam, p.mu, p.delta
    f = _erlang_factor(lam, k, t)
    base = (1.0 / mu) / (1.0 - lam / mu)
    if math.isinf(f):
        return Metrics(r=base, c=mu)
    den = f + lam * d
    return Metrics(r=base + d * (1.0 + lam * d) / den, c=mu - (mu - lam) / den)


def single_batching(p: SystemParams, b=1) -> Metrics:
    """Immediate deallocation; allocation starts once ``b`` requests have arrived."""
    Batching(b)
    check_stable(p.lam, p.mu, "single server")
    lam, mu, d = p.lam, p.mu, p.delta
    r = (1.0 / mu) / (1.0 - lam / mu) + d + b * (b - 1) / (2.0 * lam * (lam * d + b))
    c = mu - b * (mu - lam) / (lam * d + b)
    return Metrics(r=r, c=c)


def _batch_term(p, b):
    x = p.lam * p.delta
    return p.omega * (x + b * (b - 1) / (2.0 * (x + b))) - b * (p.mu - p.lam) / (x + b)


def single_optimal_objective(p: SystemParams, max_b: int = 10**6) -> SingleOptimum:
    """Best objective over always-on and all batching thresholds ``b >= 1``.

    The batching term is convex in ``b`` for ``omega > 0``; the scan stops
    once it has risen for three consecutive ``b`` past its running minimum.
    For ``omega == 0`` it decreases forever and the scan ends at ``max_b``.
    """
    check_stable(p.lam, p.mu, "single server")
    rho = p.lam / p.mu
    best_b, best = 1, _batch_term(p, 1)
    rises, prev, b = 0, best, 1
    while rises < 3 and b < max_b:
        b += 1
        v = _batch_term(p, b)
        if v < best:
            best_b, best = b, v
        rises = rises + 1 if v > prev else 0
        prev = v
    base = p.omega * rho / (1.0 - rho) + p.mu
    if best < 0:
        return SingleOptimum(base + best, Batching(best_b), best_b, best)
    return SingleOptimum(base, AlwaysOn(1), best_b, best)


def _single_levels(lam, rates, f, delta):
    """Level masses of the single-server chain relative to ``p_0I = 1``.

    Returns ``(finite, x, rho_c, tail_mass, tail_moment)`` where ``finite[i]``
    is the total probability of ``i`` requests for ``i < c`` (``finite[0]``
    covers the idle and holding states) and the tail sums run over ``i >= c``.
    """
    c = len(rates)
    x = lam * delta / (lam * delta + 1.0)
    finite = [f]
    for i in range(1, c):
        finite.append(x ** i + lam / rates[i - 1] * finite[-1])
    rho_c = lam / rates[-1]
    xc = x ** c
    one_mx = 1.0 / (1.0 + lam * delta)
    tail = (xc / one_mx + rho_c * finite[-1]) / (1.0 - rho_c)
    x1 = xc * (c / one_mx + x / one_mx ** 2)
    moment = (x1 + rho_c * (c * finite[-1] + tail)) / (1.0 - rho_c)
    return finite, x, rho_c, tail, moment


def single_statedep_rates(p: SystemParams, rates, k=1, t=0.0) -> Metrics:
    """Holding-on single server whose rate depends on the number present.

    Cost is charged at the highest rate ``rates[-1]`` whenever the server is
    allocated, in setup or holding on.
    """
    StateDepRates(tuple(rates), k, t)
    rates = [float(r) for r in rates]
    check_stable(p.lam, rates[-1], "state-dependent server")
    lam = p.lam
    f = _erlang_factor(lam, k, t)
    if math.isinf(f):
        # never deallocated: plain birth-death chain with state-dependent rates
        return _statedep_always_on(lam, rates)
    finite, _, _, tail, moment = _single_levels(lam, rates, f, p.delta)
    total = sum(finite) + tail
    mean_n = sum(i * v for i, v in enumerate(finite)) + moment
    return Metrics(r=mean_n / total / lam, c=rates[-1] * (1.0 - 1.0 / total))


def _statedep_always_on(lam, rates):
    c = len(rates)
    w = [1.0]
    for i in range(1, c):
        w.append(w[-1] * lam / rates[i - 1])
    rho_c = lam / rates[-1]
    wc = w[-1] * rho_c
    tail = wc / (1.0 - rho_c)
    moment = wc * (c / (1.0 - rho_c) + rho_c / (1.0 - rho_c) ** 2)
    total = sum(w) + tail
    mean_n = sum(i * v for i, v in enumerate(w)) + moment
    return Metrics(r=mean_n / total / lam, c=rates[-1])


# ---------------------------------------------------------------------------
# dual server, one always allocated
# ---------------------------------------------------------------------------

def _dual_upper(lam, mu1, mu2, delta, l, h):
    """Masses and first moments of the B+ and E families per unit ``p_hB+``.

    Also returns the B+ and E probabilities at ``l`` (needed for the exit flow).
    """
    roots = char_roots(lam, mu1, delta)
    r1, r2 = roots.r1, roots.r2
    big_h = h - l + 1
    u = r1 / r2
    log_r2 = math.log(r2)
    den = 1.0 - u ** big_h
    # B+ on l..h: (r2^j - r1^j)/(r2^H - r1^H), j = i - l + 1
    bplus = [math.exp((j - big_h) * log_r2) * (1.0 - u ** j) / den for j in range(1, big_h + 1)]
    bp_fin_mass = sum(bplus[:-1])
    bp_fin_mom = sum((l + j) * v for j, v in enumerate(bplus[:-1]))
    bp_tail_mass = 1.0 / (1.0 - r1)
    bp_tail_mom = h / (1.0 - r1) + r1 / (1.0 - r1) ** 2
    bp_mass = bp_fin_mass + bp_tail_mass

    inv_d = 1.0 / delta
    # E on l..h from the cut around {E states >= i}
    e = [bp_mass * inv_d / mu2]
    above = bp_mass
    for j in range(1, big_h):
        above -= bplus[j - 1]
        e.append((lam * e[-1] + above * inv_d) / mu2)
    e_fin_mass = sum(e[:-1])
    e_fin_mom = sum((l + j) * v for j, v in enumerate(e[:-1]))
    e_h = e[-1]
    rho2 = lam / mu2
    cc = inv_d / (mu2 * (1.0 - r1))
    e_tail_mass = (e_h + cc * r1 / (1.0 - r1)) / (1.0 - rho2)
    e_tail_mom = (h * e_h + rho2 * e_tail_mass + cc * (h * r1 / (1.0 - r1) + r1 / (1.0 - r1) ** 2)) / (1.0 - rho2)
    return dict(
        bp_mass=bp_mass, bp_mom=bp_fin_mom + bp_tail_mom,
        e_mass=e_fin_mass + e_tail_mass, e_mom=e_fin_mom + e_tail_mom,
        exit_rate=mu1 * bplus[0] + mu2 * e[0], bplus=bplus, e=e, r1=r1,
    )


def _dual_lower(lam, mu1, l, h):
    """B-family probabilities for ``0 <= i < h``, scaled so that nothing overflows.

    Returns ``(pB, z)`` with ``pB`` the B probabilities and ``z`` the value of
    ``p_(h-1)B`` on the same scale.  When ``mu1 <= lam`` the scale is
    ``p_(h-1)B = 1``; otherwise ``p_0B = 1``.
    """
    y = mu1 / lam
    pb = [0.0] * h
    if y <= 1.0:
        z = 1.0
        pb[h - 1] = 1.0
        for i in range(h - 2, l - 2, -1):
            pb[i] = y * pb[i + 1] + z
        for i in range(l - 2, -1, -1):
            pb[i] = y * pb[i + 1]
        return pb, z
    rho1 = 1.0 / y
    pb[0] = 1.0
    for i in range(1, l):
        pb[i] = pb[i - 1] * rho1
    base = pb[l - 1]
    n = h - l  # p_iB = base * G_{h-1-i} / G_{h-l},  G_a = sum_{m<=a} y^m
    for i in range(l - 1, h):
        a = h - 1 - i
        pb[i] = base * rho1 ** (n - a) * (1.0 - rho1 ** (a + 1)) / (1.0 - rho1 ** (n + 1))
    return pb, pb[h - 1]


def dual_one_always(p: SystemParams, l=2, h=2, mu1=None, mu2=None) -> Metrics:
    """Baseline server always allocated, extra server allocated at ``h`` and released below ``l``."""
    pol = DualOneAlways(l, h, mu1, mu2)
    mu1, mu2 = pol.rates(p)
    check_stable(p.lam, mu2, "dual one-always")
    if p.delta <= 0:
        raise ParameterError("dual one-always model needs delta > 0")
    lam = p.lam
    up = _dual_upper(lam, mu1, mu2, p.delta, l, h)
    pb, z = _dual_lower(lam, mu1, l, h)
    anchor = z * lam / up["exit_rate"]  # p_hB+ on the B scale
    b_mass = sum(pb)
    b_mom = sum(i * v for i, v in enumerate(pb))
    total = b_mass + anchor * (up["bp_mass"] + up["e_mass"])
    mean_n = (b_mom + anchor * (up["bp_mom"] + up["e_mom"])) / total
    c = (mu1 * b_mass + mu2 * anchor * (up["bp_mass"] + up["e_mass"])) / total
    return Metrics(r=mean_n / lam, c=c)


def dual_one_always_equal_thresholds(p: SystemParams, h=2, mu1=None, mu2=None) -> Metrics:
    """Specialised closed form for ``l == h``.

    The ``(mu1/lam)`` power sums are carried as polynomials (no division by
    ``1 - mu1/lam``) and rescaled by ``(mu1/lam)**(h-1)`` when that ratio exceeds one.
    """
    pol = DualOneAlways(h, h, mu1, mu2)
    mu1, mu2 = pol.rates(p)
    check_stable(p.lam, mu2, "dual one-always")
    if p.delta <= 0:
        raise ParameterError("dual one-always model needs delta > 0")
    lam = p.lam
    r1 = char_roots(lam, mu1, p.delta).r1
    y = mu1 / lam
    if y > 1.0:
        rho1 = 1.0 / y
        scale = rho1 ** (h - 1)
        a_sum = sum(rho1 ** (h - 1 - j) for j in range(h))
        b_sum = sum((j + 1) * rho1 ** (h - 1 - j) for j in range(h))
    else:
        scale = 1.0
        a_sum = sum(y ** j for j in range(h))
        b_sum = sum((j + 1) * y ** j for j in range(h))
    g = (lam / r1 - mu1) / (mu2 - lam)
    q = (1.0 - r1) / r1
    num = lam * (lam / r1 - mu1) / (mu2 - lam) ** 2 * scale - q * b_sum - a_sum
    den = (1.0 + g) * scale + q * a_sum
    mean_n = h + r1 / (1.0 - r1) + num / den
    p_h = (1.0 - r1) * scale / den
    sum_b = p_h * a_sum / r1 / scale
    sum_up = p_h / (1.0 - r1) + p_h * g / (1.0 - r1)
    return Metrics(r=mean_n / lam, c=mu1 * sum_b + mu2 * sum_up)


# ---------------------------------------------------------------------------
# dual server, both dynamic
# ---------------------------------------------------------------------------

def _dual_both_families(p: SystemParams):
    lam, mu, d = p.lam, p.mu, p.delta
    inv_d = 1.0 / d
    x1 = lam / (lam + inv_d)
    x2 = lam / (lam + 2 * inv_d)
    r1 = char_roots(lam, mu, d).r1
    gap = 2 * mu - lam - 2 * inv_d
    degenerate = abs(gap) <= DEGENERATE_RTOL * (2 * mu + lam + 2 * inv_d)
    # D family
    sd, md = x1 / (1 - x2), x1 / (1 - x2) ** 2
    # B family
    if degenerate:
        r = x2
        a0 = 2 * lam / (lam + 2 * inv_d)
        b0 = 4 * lam / ((lam + 4 * inv_d) * (lam * d + 1))
        sb = a0 / (1 - r) + b0 * r / (1 - r) ** 2
        mb = a0 / (1 - r) ** 2 + 2 * b0 * r / (1 - r) ** 3

        def pb(i):
            return (a0 + b0 * (i - 1)) * r ** (i - 1)
    else:
        kk = 2 * (lam + 2 * inv_d) * lam / (lam + inv_d)
        sb = lam / (mu * (1 - r1)) + kk * (1 / (1 - x2) - 1 / (1 - r1)) / gap
        mb = lam / (mu * (1 - r1) ** 2) + kk * (1 / (1 - x2) ** 2 - 1 / (1 - r1) ** 2) / gap

        def pb(i):
            return lam / mu * r1 ** (i - 1) + kk * (x2 ** (i - 1) - r1 ** (i - 1)) / gap
    p1b = lam / mu
    # E family from the level cut 2 mu p_iE = lam (p_{i-1,D} + p_{i-1,B} + p_{i-1,E}) - mu p_iB
    rho = lam / (2 * mu)
    f_sum = (lam * (sd + sb) - mu * (sb - p1b)) / (2 * mu)
    g_sum = (lam * (md + sd + mb + sb) - mu * (mb - p1b)) / (2 * mu)
    se = f_sum / (1 - rho)
    me = (rho * se + g_sum) / (1 - rho)

    def pd(i):
        return x1 * x2 ** (i - 1)

    return dict(sd=sd, md=md, sb=sb, mb=mb, se=se, me=me, p1d=x1, p1b=p1b, pb=pb, pd=pd, rho=rho,
                degenerate=degenerate)


def dual_both_dynamic(p: SystemParams) -> Metrics:
    """Each of two servers allocated while it would be busy and released when it would idle."""
    check_stable(p.lam, 2 * p.mu, "dual both-dynamic")
    if p.delta <= 0:
        raise ParameterError("dual both-dynamic model needs delta > 0")
    fam = _dual_both_families(p)
    total = 1.0 + fam["sd"] + fam["sb"] + fam["se"]
    mean_n = (fam["md"] + fam["mb"] + fam["me"]) / total
    one = fam["p1d"] + fam["p1b"]
    two = fam["sd"] + fam["sb"] + fam["se"] - one
    c = p.mu * (one + 2 * two) / total
    return Metrics(r=mean_n / p.lam, c=c)


# ---------------------------------------------------------------------------
# unlimited servers
# ---------------------------------------------------------------------------

def server_per_request(p: SystemParams) -> Metrics:
    return Metrics(r=1.0 / p.mu + p.delta, c=p.lam * (1.0 + p.delta * p.mu))


def _reactive_weights(p, s):
    """Unnormalised ``p_{i,*}`` for ``i <= s`` and the geometric tail ratio."""
    inv_d = _inv(p.delta)
    w = [1.0]
    for m in range(1, s + 1):
        w.append(w[-1] * p.lam / (p.lam + m * inv_d))
    return w, p.lam / (p.lam + s * inv_d)


def reactive_unlimited(p: SystemParams, s=1) -> Metrics:
    """One allocation initiated per waiting request, at most ``s`` at once."""
    ReactiveUnlimited(s)
    w, ts = _reactive_weights(p, s)
    z = sum(w[:s]) + w[s] / (1 - ts)
    head = sum(i * w[i] for i in range(s))
    mean_wait = (head + w[s] * (s / (1 - ts) + ts / (1 - ts) ** 2)) / z
    mean_setup = (head + w[s] * s / (1 - ts)) / z
    return Metrics(r=1.0 / p.mu + mean_wait / p.lam, c=p.lam + p.mu * mean_setup)


def proactive_unlimited(p: SystemParams) -> Metrics:
    """Always one spare server; a new allocation starts whenever all allocated servers are busy."""
    if p.delta <= 0:
        raise ParameterError("proactive model needs delta > 0")
    r = char_roots(p.lam, p.mu, p.delta).r1
    g = r / (1 - r)
    return Metrics(r=(1 / p.mu) * ((p.mu + 1 / p.delta) / p.lam) * g,
                   c=p.mu * (1 + r) + g / p.delta)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def evaluate(policy, p: SystemParams) -> Metrics:
    """Closed-form metrics of any :data:`~dynalloc.core.PolicySpec`."""
    if isinstance(policy, AlwaysOn):
        return mmk_baseline(p, policy.servers)
    if isinstance(policy, HoldOn):
        return single_hold_on(p, policy.k, policy.t)
    if isinstance(policy, Batching):
        return single_batching(p, policy.b)
    if isinstance(policy, DualOneAlways):
        return dual_one_always(p, policy.l, policy.h, policy.mu1, policy.mu2)
    if isinstance(policy, DualBothDynamic):
        return dual_both_dynamic(p)
    if isinstance(policy, StateDepRates):
        return single_statedep_rates(p, policy.rates, policy.k, policy.t)
    if isinstance(policy, ServerPerRequest):
        return server_per_request(p)
    if isinstance(policy, ReactiveUnlimited):
        return reactive_unlimited(p, policy.s)
    if isinstance(policy, ProactiveUnlimited):
        return proactive_unlimited(p)
    if isinstance(policy, SmdpTable):
        from .smdp import stationary_metrics
        return stationary_metrics(policy.table, p)
    raise TypeError(f"unknown policy {policy!r}")


def evaluate_objective(policy, p: SystemParams) -> float:
    return objective(evaluate(policy, p), p)


# ---------------------------------------------------------------------------
# diagnostic state probabilities
# ---------------------------------------------------------------------------

def _levels_until(tail_fn, eps, start=1, limit=10**6):
    n = start
    while tail_fn(n) > eps and n < limit:
        n += 1
    return n


def statedep_state_probs(p: SystemParams, rates, k=1, t=0.0, eps=TAIL_EPS) -> StateProbVector:
    """Per-state probabilities of the holding-on chain (finite Erlang shape only).

    Labels: ``("I", 0)``, ``("H", j)`` for ``1 <= j <= k``, ``("A", i)`` and ``("D", i)`` for ``i >= 1``.
    """
    if k == DETERMINISTIC or math.isinf(t):
        raise ParameterError("state probabilities need a finite Erlang shape and finite t")
    rates = [float(x) for x in rates]
    check_stable(p.lam, rates[-1], "state-dependent server")
    lam, d = p.lam, p.delta
    k = int(k)
    f = _erlang_factor(lam, k, t)
    finite, x, rho_c, tail, _ = _single_levels(lam, rates, f, d)
    p0 = 1.0 / (sum(finite) + tail)
    labels, probs = [("I", 0)], [p0]
    if t > 0:
        ratio = (lam + k / t) / (k / t)
        for j in range(1, k + 1):
            labels.append(("H", j))
            probs.append(p0 * (lam * t / k) * ratio ** (k - j))
    level = p0 * f  # total probability at level i-1
    i = 1
    while True:
        mu_i = rates[min(i, len(rates)) - 1]
        pa = lam / mu_i * level
        pd = p0 * x ** i
        labels += [("A", i), ("D", i)]
        probs += [pa, pd]
        level = pa + pd
        if 1.0 - sum(probs) <= eps and i >= len(rates):
            break
        i += 1
    return StateProbVector(labels, probs)


def holdon_state_probs(p: SystemParams, k=1, t=0.0, eps=TAIL_EPS) -> StateProbVector:
    return statedep_state_probs(p, (p.mu,), k, t, eps)


def dual_one_always_state_probs(p: SystemParams, l=2, h=2, mu1=None, mu2=None, eps=TAIL_EPS) -> StateProbVector:
    """Labels ``("B", i)`` for ``i < h``, ``("B+", i)`` and ``("E", i)`` for ``i >= l``."""
    pol = DualOneAlways(l, h, mu1, mu2)
    mu1, mu2 = pol.rates(p)
    check_stable(p.lam, mu2, "dual one-always")
    lam = p.lam
    up = _dual_upper(lam, mu1, mu2, p.delta, l, h)
    pb, z = _dual_lower(lam, mu1, l, h)
    anchor = z * lam / up["exit_rate"]
    total = sum(pb) + anchor * (up["bp_mass"] + up["e_mass"])
    labels = [("B", i) for i in range(h)]
    probs = [v / total for v in pb]
    a = anchor / total
    for j, v in enumerate(up["bplus"][:-1]):
        labels.append(("B+", l + j))
        probs.append(a * v)
    for j, v in enumerate(up["e"][:-1]):
        labels.append(("E", l + j))
        probs.append(a * v)
    r1, rho2 = up["r1"], lam / mu2
    cc = 1.0 / (p.delta * mu2 * (1.0 - r1))
    bp, e, i = a, a * up["e"][-1], h
    while True:
        labels += [("B+", i), ("E", i)]
        probs += [bp, e]
        if 1.0 - sum(probs) <= eps:
            break
        i += 1
        bp *= r1
        e = rho2 * e + a * cc * r1 ** (i - h)
    return StateProbVector(labels, probs)


def dual_both_dynamic_state_probs(p: SystemParams, eps=TAIL_EPS) -> StateProbVector:
    """Labels ``("I", 0)``, ``("D", i)``, ``("B", i)`` for ``i >= 1`` and ``("E", i)`` for ``i >= 2``."""
    check_stable(p.lam, 2 * p.mu, "dual both-dynamic")
    fam = _dual_both_families(p)
    total = 1.0 + fam["sd"] + fam["sb"] + fam["se"]
    lam, mu = p.lam, p.mu
    labels, probs = [("I", 0)], [1.0 / total]
    prev = (0.0, 0.0, 0.0)  # D, B, E at level i-1
    i = 1
    while True:
        pd = fam["pd"](i) / total
        pb = fam["pb"](i) / total
        if i == 1:
            pe = 0.0
        else:
            pe = (lam * (prev[0] + prev[1] + prev[2]) - mu * pb) / (2 * mu)
        labels += [("D", i), ("B", i)]
        probs += [pd, pb]
        if i >= 2:
            labels.append(("E", i))
            probs.append(pe)
        prev = (pd, pb, pe)
        if 1.0 - sum(probs) <= eps and i >= 2:
            break
        i += 1
    return StateProbVector(labels, probs)


def _poisson_pmf(mean, eps):
    out = [math.exp(-mean)]
    k = 0
    while 1.0 - sum(out) > eps or k < mean:
        k += 1
        out.append(out[-1] * mean / k)
    return out


def reactive_state_probs(p: SystemParams, s=1, eps=TAIL_EPS) -> StateProbVector:
    """Product-form joint probabilities; label ``(i, k)`` = (waiting, in service)."""
    w, ts = _reactive_weights(p, s)
    z = sum(w[:s]) + w[s] / (1 - ts)
    marg_i = [v / z for v in w[:s]]
    v = w[s] / z
    while 1.0 - sum(marg_i) > eps / 2:
        marg_i.append(v)
        v *= ts
    marg_k = _poisson_pmf(p.lam / p.mu, eps / 2)
    return _product(marg_i, marg_k)


def proactive_state_probs(p: SystemParams, eps=TAIL_EPS) -> StateProbVector:
    """Product-form joint probabilities; label ``(i, k)`` with ``k + 1`` allocated servers."""
    r = char_roots(p.lam, p.mu, p.delta).r1
    marg_i = []
    v = 1 - r
    while 1.0 - sum(marg_i) > eps / 2:
        marg_i.append(v)
        v *= r
    marg_k = _poisson_pmf(r / (p.delta * p.mu * (1 - r)), eps / 2)
    return _product(marg_i, marg_k)


def _product(marg_i, marg_k):
    labels, probs = [], []
    for i, a in enumerate(marg_i):
        for k, b in enumerate(marg_k):
            labels.append((i, k))
            probs.append(a * b)
    return StateProbVector(labels, probs)
