"""Shared parameter/metric types, the policy catalogue and the objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

#: Shape value selecting a deterministic holding-on time (the Erlang k -> inf limit).
DETERMINISTIC = math.inf


class ParameterError(ValueError):
    """A parameter is outside its admissible range."""


class InstabilityError(ParameterError):
    """The policy's queue is unstable at the requested arrival rate."""


class ConvergenceError(RuntimeError):
    """Policy iteration did not reach a fixed point."""


def _require(cond, msg):
    if not cond:
        raise ParameterError(msg)


@dataclass(frozen=True)
class SystemParams:
    """Arrival rate, per-server service rate, mean setup delay and objective weight."""

    lam: float
    mu: float = 1.0
    delta: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("lam", "mu", "delta", "omega"):
            v = getattr(self, name)
            _require(isinstance(v, (int, float)) and math.isfinite(v), f"{name} must be a finite number, got {v!r}")
        _require(self.lam > 0, f"lam must be > 0, got {self.lam}")
        _require(self.mu > 0, f"mu must be > 0, got {self.mu}")
        _require(self.delta >= 0, f"delta must be >= 0, got {self.delta}")
        _require(self.omega >= 0, f"omega must be >= 0, got {self.omega}")

    def replace(self, **kw) -> "SystemParams":
        d = dict(lam=self.lam, mu=self.mu, delta=self.delta, omega=self.omega)
        d.update(kw)
        return SystemParams(**d)


@dataclass(frozen=True)
class Metrics:
    """Mean response time ``r``, cost rate ``c`` and (two-site runs) mean occupancy ``q``.

    ``q``, when set, already includes responses in transit, so the objective
    becomes ``omega * q + c``.
    """

    r: float
    c: float
    q: Optional[float] = None

    def objective(self, p: SystemParams) -> float:
        return objective(self, p)


def objective(m: Metrics, p: SystemParams) -> float:
    """Weighted sum ``omega * lam * R + C`` of request-time and server-time rates."""
    if m.q is not None:
        return p.omega * m.q + m.c
    return p.omega * p.lam * m.r + m.c


# ---------------------------------------------------------------------------
# policy catalogue
# ---------------------------------------------------------------------------

def _check_shape(k):
    _require(k == DETERMINISTIC or (float(k).is_integer() and k >= 1),
             f"holding-on shape k must be an integer >= 1 or DETERMINISTIC, got {k!r}")


@dataclass(frozen=True)
class AlwaysOn:
    servers: int = 1

    def __post_init__(self):
        _require(int(self.servers) == self.servers and self.servers >= 1, "servers must be an integer >= 1")


@dataclass(frozen=True)
class HoldOn:
    """Single server kept allocated for an Erlang-``k`` (mean ``t``) time after idling."""

    k: float = 1
    t: float = 0.0

    def __post_init__(self):
        _check_shape(self.k)
        _require(self.t >= 0, "holding time t must be >= 0")


@dataclass(frozen=True)
class Batching:
    """Single server, allocation triggered once ``b`` requests are waiting."""

    b: int = 1

    def __post_init__(self):
        _require(int(self.b) == self.b and self.b >= 1, "batch size b must be an integer >= 1")


@dataclass(frozen=True)
class DualOneAlways:
    """Baseline rate ``mu1`` always allocated; extra capacity (total ``mu2``) with
    allocation started at ``h`` requests and released below ``l``.

    ``mu1``/``mu2`` default to ``mu`` and ``2 mu`` of the system parameters.
    """

    l: int = 2
    h: int = 2
    mu1: Optional[float] = None
    mu2: Optional[float] = None

    def __post_init__(self):
        _require(int(self.l) == self.l and int(self.h) == self.h, "thresholds must be integers")
        _require(1 <= self.l <= self.h, f"need 1 <= l <= h, got l={self.l}, h={self.h}")
        if self.mu1 is not None and self.mu2 is not None:
            _require(self.mu2 > self.mu1 > 0, "need mu2 > mu1 > 0")

    def rates(self, p: SystemParams) -> Tuple[float, float]:
        mu1 = p.mu if self.mu1 is None else self.mu1
        mu2 = 2 * p.mu if self.mu2 is None else self.mu2
        _require(mu2 > mu1 > 0, "need mu2 > mu1 > 0")
        return mu1, mu2


@dataclass(frozen=True)
class DualBothDynamic:
    pass


@dataclass(frozen=True)
class StateDepRates:
    """Single-queue server whose rate is ``rates[min(n, c) - 1]`` with ``n`` requests present.

    With ``rates=(mu, 2 mu)`` this is the "allocate both servers together" policy.
    """

    rates: Tuple[float, ...] = (1.0,)
    k: float = 1
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        _require(len(self.rates) >= 1, "need at least one rate")
        _require(all(r > 0 for r in self.rates), "rates must be positive")
        _require(all(b >= a for a, b in zip(self.rates, self.rates[1:])), "rates must be nondecreasing")
        _check_shape(self.k)
        _require(self.t >= 0, "holding time t must be >= 0")

    @property
    def c(self) -> int:
        return len(self.rates)


@dataclass(frozen=True)
class ServerPerRequest:
    pass


@dataclass(frozen=True)
class ReactiveUnlimited:
    """One allocation started per waiting request, at most ``s`` in progress."""

    s: int = 1

    def __post_init__(self):
        _require(int(self.s) == self.s and self.s >= 1, "s must be an integer >= 1")


@dataclass(frozen=True)
class ProactiveUnlimited:
    pass


@dataclass(frozen=True)
class SmdpTable:
    """An explicit decision table produced by policy iteration (see :mod:`dynalloc.smdp`)."""

    table: object = field(compare=False)


PolicySpec = Union[AlwaysOn, HoldOn, Batching, DualOneAlways, DualBothDynamic, StateDepRates,
                   ServerPerRequest, ReactiveUnlimited, ProactiveUnlimited, SmdpTable]


def stability_limit(policy, p: SystemParams) -> float:
    """Largest admissible arrival rate (exclusive) for ``policy``; ``inf`` if unbounded."""
    if isinstance(policy, AlwaysOn):
        return policy.servers * p.mu
    if isinstance(policy, (HoldOn, Batching)):
        return p.mu
    if isinstance(policy, DualOneAlways):
        return policy.rates(p)[1]
    if isinstance(policy, DualBothDynamic):
        return 2 * p.mu
    if isinstance(policy, StateDepRates):
        return policy.rates[-1]
    if isinstance(policy, SmdpTable):
        return policy.table.caps.cap_total * p.mu
    return math.inf


def check_stable(lam, limit, what="policy"):
    if not lam < limit:
        raise InstabilityError(f"{what} is unstable: arrival rate {lam} >= capacity {limit}")
