"""Truncated continuous-time Markov chains built straight from the policy rules.

These generators are independent of the closed forms in :mod:`dynalloc.analytic`
and serve as numerical oracles: the stationary distribution of a truncated chain
(arrivals blocked at the truncation level) converges to the true one as the
level grows, and the balance residual of a candidate distribution can be
measured on the interior states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Hashable, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import DualOneAlways, SystemParams

Transitions = Callable[[Hashable], List[Tuple[Hashable, float]]]


@dataclass
class Chain:
    """A labelled generator with per-state request count and cost rate."""

    labels: List[Hashable]
    out: Transitions
    n_of: Callable[[Hashable], float]
    cost_of: Callable[[Hashable], float]

    def generator(self):
        idx = {s: i for i, s in enumerate(self.labels)}
        rows, cols, vals = [], [], []
        for i, s in enumerate(self.labels):
            tot = 0.0
            for t, rate in self.out(s):
                j = idx.get(t)
                if j is None or rate == 0:
                    continue
                rows.append(i)
                cols.append(j)
                vals.append(rate)
                tot += rate
            rows.append(i)
            cols.append(i)
            vals.append(-tot)
        n = len(self.labels)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), idx

    def stationary(self) -> np.ndarray:
        q, _ = self.generator()
        a = q.T.tolil()
        a[0, :] = 1.0
        rhs = np.zeros(len(self.labels))
        rhs[0] = 1.0
        pi = spla.spsolve(a.tocsc(), rhs)
        return np.maximum(pi, 0.0) / np.maximum(pi, 0.0).sum()

    def metrics(self, pi, lam):
        """``(R, C)`` from a stationary vector over :attr:`labels`."""
        n = np.array([self.n_of(s) for s in self.labels])
        c = np.array([self.cost_of(s) for s in self.labels])
        return float(pi @ n) / lam, float(pi @ c)

    def balance_residual(self, probs: Dict[Hashable, float]) -> float:
        """Max |inflow - outflow| over states whose neighbours all carry a probability.

        Measured in probability-flow units divided by the largest rate of the chain.
        """
        inflow: Dict[Hashable, float] = {}
        outflow: Dict[Hashable, float] = {}
        closed = {}
        top = 0.0
        for s in probs:
            ok = True
            for t, rate in self.out(s):
                if rate == 0:
                    continue
                top = max(top, rate)
                outflow[s] = outflow.get(s, 0.0) + probs[s] * rate
                if t in probs:
                    inflow[t] = inflow.get(t, 0.0) + probs[s] * rate
                else:
                    ok = False
            closed[s] = ok
        # a state is interior if it and every predecessor had all edges inside
        preds_ok: Dict[Hashable, bool] = {}
        for s in probs:
            for t, rate in self.out(s):
                if rate and t in probs:
                    preds_ok[t] = preds_ok.get(t, True) and closed[s]
        worst = 0.0
        for s in probs:
            if not closed[s] or not preds_ok.get(s, True):
                continue
            worst = max(worst, abs(inflow.get(s, 0.0) - outflow.get(s, 0.0)))
        return worst / top if top else worst


# ---------------------------------------------------------------------------
# single server with holding-on timer and state-dependent rate
# ---------------------------------------------------------------------------

def single_chain(p: SystemParams, rates: Sequence[float], k: int, t: float, levels: int) -> Chain:
    """States ``("I",0)``, ``("H",j)``, ``("A",i)`` (serving) and ``("D",i)`` (in setup)."""
    lam, d = p.lam, p.delta
    rates = list(rates)
    c = len(rates)

    def out(s):
        kind, i = s
        if kind == "I":
            return [(("D", 1), lam)]
        if kind == "H":
            nxt = ("H", i + 1) if i < k else ("I", 0)
            return [(nxt, k / t), (("A", 1), lam)]
        if kind == "D":
            return [(("D", i + 1), lam), (("A", i), 1.0 / d)]
        mu_i = rates[min(i, c) - 1]
        down = ("A", i - 1) if i > 1 else (("H", 1) if t > 0 else ("I", 0))
        return [(("A", i + 1), lam), (down, mu_i)]

    labels = [("I", 0)]
    if t > 0:
        labels += [("H", j) for j in range(1, k + 1)]
    for i in range(1, levels + 1):
        labels += [("A", i), ("D", i)]
    return Chain(labels, out, lambda s: s[1] if s[0] in "AD" else 0,
                 lambda s: 0.0 if s[0] == "I" else rates[-1])


def batching_chain(p: SystemParams, b: int, levels: int) -> Chain:
    """``("W",i)`` waiting with the server released, ``("D",i)`` in setup, ``("A",i)`` serving."""
    lam, mu, d = p.lam, p.mu, p.delta

    def out(s):
        kind, i = s
        if kind == "W":
            return [(("W", i + 1) if i + 1 < b else ("D", b), lam)]
        if kind == "D":
            return [(("D", i + 1), lam), (("A", i), 1.0 / d)]
        return [(("A", i + 1), lam), (("A", i - 1) if i > 1 else ("W", 0), mu)]

    labels = [("W", i) for i in range(b)]
    labels += [("D", i) for i in range(b, levels + 1)]
    labels += [("A", i) for i in range(1, levels + 1)]
    return Chain(labels, out, lambda s: s[1], lambda s: 0.0 if s[0] == "W" else mu)


# ---------------------------------------------------------------------------
# dual server
# ---------------------------------------------------------------------------

def dual_one_always_chain(p: SystemParams, l: int, h: int, mu1=None, mu2=None, levels: int = 200) -> Chain:
    """``("B",i)`` baseline only, ``("B+",i)`` extra capacity in setup, ``("E",i)`` both allocated."""
    mu1, mu2 = DualOneAlways(l, h, mu1, mu2).rates(p)
    lam, d = p.lam, p.delta

    def out(s):
        kind, i = s
        if kind == "B":
            res = [(("B", i + 1) if i + 1 < h else ("B+", h), lam)]
            if i > 0:
                res.append((("B", i - 1), mu1))
            return res
        if kind == "B+":
            down = ("B+", i - 1) if i > l else ("B", l - 1)
            return [(("B+", i + 1), lam), (down, mu1), (("E", i), 1.0 / d)]
        down = ("E", i - 1) if i > l else ("B", l - 1)
        return [(("E", i + 1), lam), (down, mu2)]

    labels = [("B", i) for i in range(h)]
    for i in range(l, levels + 1):
        labels += [("B+", i), ("E", i)]
    return Chain(labels, out, lambda s: s[1], lambda s: mu1 if s[0] == "B" else mu2)


def dual_both_dynamic_chain(p: SystemParams, levels: int = 200) -> Chain:
    """``("I",0)``; ``("D",i)`` no server ready; ``("B",i)`` one ready; ``("E",i)`` both ready.

    In ``D`` and ``B`` states every server not ready but wanted is in setup.
    """
    lam, mu, d = p.lam, p.mu, p.delta

    def out(s):
        kind, i = s
        if kind == "I":
            return [(("D", 1), lam)]
        if kind == "D":
            return [(("D", i + 1), lam), (("B", i), (1 if i == 1 else 2) / d)]
        if kind == "B":
            res = [(("B", i + 1), lam), (("B", i - 1) if i > 1 else ("I", 0), mu)]
            if i >= 2:
                res.append((("E", i), 1.0 / d))
            return res
        return [(("E", i + 1), lam), (("E", i - 1) if i > 2 else ("B", 1), 2 * mu)]

    labels = [("I", 0)]
    for i in range(1, levels + 1):
        labels += [("D", i), ("B", i)]
        if i >= 2:
            labels.append(("E", i))
    return Chain(labels, out, lambda s: s[1],
                 lambda s: 0.0 if s[0] == "I" else (mu if s[1] == 1 else 2 * mu))


# ---------------------------------------------------------------------------
# unlimited servers
# ---------------------------------------------------------------------------

def reactive_chain(p: SystemParams, s: int, waiting: int, serving: int) -> Chain:
    """State ``(i, k)``: ``i`` requests waiting, ``k`` in service, ``min(i, s)`` setups running.

    A server finishing service takes the head waiting request if there is one.
    """
    lam, mu, d = p.lam, p.mu, p.delta

    def out(st):
        i, k = st
        res = [((i + 1, k), lam)]
        if k:
            res.append(((i - 1, k) if i else (0, k - 1), k * mu))
        if i:
            res.append(((i - 1, k + 1), min(i, s) / d))
        return res

    labels = [(i, k) for i in range(waiting + 1) for k in range(serving + 1)]
    return Chain(labels, out, lambda st: st[0] + st[1], lambda st: mu * (st[1] + min(st[0], s)))


def proactive_chain(p: SystemParams, waiting: int, busy: int) -> Chain:
    """State ``(i, k)``: ``k + 1`` servers ready, ``i + k`` requests, one setup running iff ``i >= 1``.

    ``i = 0`` means ``k`` busy servers plus one idle spare; ``i >= 1`` means all
    ``k + 1`` ready servers are busy and ``i - 1`` requests wait.
    """
    lam, mu, d = p.lam, p.mu, p.delta

    def out(st):
        i, k = st
        if i == 0:
            res = [((1, k), lam)]
            if k:
                res.append(((0, k - 1), k * mu))
            return res
        # k + 1 busy servers; a completion frees one for the head of the queue or leaves a spare
        res = [((i + 1, k), lam), ((i - 1, k), (k + 1) * mu), ((i - 1, k + 1), 1.0 / d)]
        return res

    labels = [(i, k) for i in range(waiting + 1) for k in range(busy + 1)]

    def n_of(st):
        return st[0] + st[1]

    def cost_of(st):
        i, k = st
        return mu * (k + 1 + (1 if i else 0))

    return Chain(labels, out, n_of, cost_of)
