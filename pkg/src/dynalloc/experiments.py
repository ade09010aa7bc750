"""Parameter sweeps and figure presets.

Policies are written as compact spec strings, ``name[:key=value]...``::

    holdon:k=1:T=4      holdon:k=det:T=4     batching:b=2
    mmk:servers=2       statedep:rates=1/2   dual-one-always:l=2:h=3
    dual-both           per-request          reactive:s=2        proactive

Every sweep returns a header and a list of rows; :func:`write_csv` renders
floats with ``repr`` so that values round-trip exactly.

Preset grids (arrival rate, omega, transfer time) and the hold-on time
``T = 2 * Delta`` are toolkit defaults.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import analytic, routing, smdp
from .core import (DETERMINISTIC, AlwaysOn, Batching, DualBothDynamic, DualOneAlways, HoldOn, InstabilityError,
                   ParameterError, ProactiveUnlimited, ReactiveUnlimited, ServerPerRequest, StateDepRates,
                   SystemParams)


# ---------------------------------------------------------------------------
# policy spec strings
# ---------------------------------------------------------------------------

def _shape(v: str):
    if v.lower() in ("det", "deterministic", "inf"):
        return DETERMINISTIC
    return int(v)


def _rates(v: str):
    return tuple(float(x) for x in v.replace(",", "/").split("/") if x)


_KINDS: Dict[str, Tuple[type, Dict[str, Tuple[str, Callable]]]] = {
    "mmk": (AlwaysOn, {"servers": ("servers", int)}),
    "holdon": (HoldOn, {"k": ("k", _shape), "t": ("t", float)}),
    "batching": (Batching, {"b": ("b", int)}),
    "statedep": (StateDepRates, {"rates": ("rates", _rates), "k": ("k", _shape), "t": ("t", float)}),
    "dual-one-always": (DualOneAlways, {"l": ("l", int), "h": ("h", int), "mu1": ("mu1", float),
                                        "mu2": ("mu2", float)}),
    "dual-both": (DualBothDynamic, {}),
    "per-request": (ServerPerRequest, {}),
    "reactive": (ReactiveUnlimited, {"s": ("s", int)}),
    "proactive": (ProactiveUnlimited, {}),
}
_ALIASES = {"always-on": "mmk", "hold-on": "holdon", "dual-both-dynamic": "dual-both", "server-per-request": "per-request",
            "reactive-unlimited": "reactive", "proactive-unlimited": "proactive", "state-dep": "statedep"}

POLICY_NAMES = tuple(_KINDS)


def parse_policy(spec: str):
    """Build a policy object from ``name[:key=value]...``."""
    name, *parts = [x.strip() for x in spec.strip().split(":")]
    name = _ALIASES.get(name.lower(), name.lower())
    if name not in _KINDS:
        raise ParameterError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
    cls, fields_ = _KINDS[name]
    kw = {}
    for part in parts:
        if not part:
            continue
        if "=" not in part:
            raise ParameterError(f"policy option {part!r} is not key=value")
        key, val = part.split("=", 1)
        key = key.strip().lower()
        if key not in fields_:
            raise ParameterError(f"policy {name} has no option {key!r}")
        attr, conv = fields_[key]
        try:
            kw[attr] = conv(val.strip())
        except ValueError as exc:
            raise ParameterError(f"bad value for {key}: {val!r}") from exc
    return cls(**kw)


def _num(x) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def policy_label(policy) -> str:
    """Inverse of :func:`parse_policy`, used for CSV column names."""
    if isinstance(policy, AlwaysOn):
        return f"mmk:servers={policy.servers}"
    if isinstance(policy, HoldOn):
        k = "det" if policy.k == DETERMINISTIC else int(policy.k)
        return f"holdon:k={k}:T={_num(policy.t)}"
    if isinstance(policy, Batching):
        return f"batching:b={policy.b}"
    if isinstance(policy, StateDepRates):
        k = "det" if policy.k == DETERMINISTIC else int(policy.k)
        return f"statedep:rates={'/'.join(_num(r) for r in policy.rates)}:k={k}:T={_num(policy.t)}"
    if isinstance(policy, DualOneAlways):
        s = f"dual-one-always:l={policy.l}:h={policy.h}"
        if policy.mu1 is not None:
            s += f":mu1={_num(policy.mu1)}"
        if policy.mu2 is not None:
            s += f":mu2={_num(policy.mu2)}"
        return s
    if isinstance(policy, DualBothDynamic):
        return "dual-both"
    if isinstance(policy, ServerPerRequest):
        return "per-request"
    if isinstance(policy, ReactiveUnlimited):
        return f"reactive:s={policy.s}"
    if isinstance(policy, ProactiveUnlimited):
        return "proactive"
    return type(policy).__name__


# ---------------------------------------------------------------------------
# grids and CSV
# ---------------------------------------------------------------------------

def grid(start: float, stop: float, step: float) -> List[float]:
    """Inclusive arithmetic grid, rounded to the step's decimals to avoid drift."""
    if not step > 0:
        raise ParameterError("sweep step must be > 0")
    if stop < start:
        raise ParameterError("sweep end must not precede its start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    digits = max(0, -int(math.floor(math.log10(step))) + 2)
    return [round(start + i * step, digits) for i in range(n)]


def write_csv(header: Sequence[str], rows: Iterable[Sequence], out) -> None:
    """Write rows to a path or an open text stream; floats use ``repr``."""
    def cell(x):
        if isinstance(x, float):
            return repr(x)
        return "" if x is None else str(x)

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(x) for x in r])

    if hasattr(out, "write"):
        emit(out)
    else:
        with open(out, "w", newline="") as fh:
            emit(fh)


def _pmap(fn, items, workers: int = 1):
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# ratio sweeps
# ---------------------------------------------------------------------------

def unlimited_cap(lam: float, mu: float = 1.0) -> int:
    """Server cap for the optimum when the compared policies have no server limit."""
    a = lam / mu
    return int(math.ceil(a + 4 * math.sqrt(a + 1))) + 4


@dataclass(frozen=True)
class RatioSweep:
    """Objective ratios of ``policies`` to the capped optimum over a grid of ``lam`` or ``omega``.

    ``cap_total=None`` sizes the server cap per point with :func:`unlimited_cap`.
    ``extra_optima`` adds ratio columns for restricted optima, keyed by label,
    given as the ``cap_a`` to use.
    """

    base: SystemParams
    policies: Tuple[object, ...]
    values: Tuple[float, ...]
    axis: str = "lambda"
    cap_total: Optional[int] = 1
    cap_a: Optional[int] = None
    extra_optima: Tuple[Tuple[str, int], ...] = ()

    def params_at(self, x: float) -> SystemParams:
        if self.axis == "lambda":
            return self.base.replace(lam=x)
        if self.axis == "omega":
            return self.base.replace(omega=x)
        raise ParameterError(f"unknown sweep axis {self.axis!r}")

    def header(self) -> List[str]:
        h = [self.axis, "optimal_objective", "optimal_iterations"]
        h += [f"ratio[{policy_label(pol)}]" for pol in self.policies]
        h += [f"ratio[optimal:{lab}]" for lab, _ in self.extra_optima]
        return h + ["unstable"]

    def row(self, x: float) -> list:
        p = self.params_at(x)
        cap = unlimited_cap(p.lam, p.mu) if self.cap_total is None else self.cap_total
        opt = smdp.solve_optimal(p, cap_total=cap, cap_a=self.cap_a)
        out = [x, opt.objective, opt.iterations]
        bad = []
        for pol in self.policies:
            try:
                out.append(analytic.evaluate_objective(pol, p) / opt.objective)
            except InstabilityError:
                out.append(math.nan)
                bad.append(policy_label(pol))
        for _, ca in self.extra_optima:
            out.append(smdp.solve_optimal(p, cap_total=cap, cap_a=ca).objective / opt.objective)
        out.append(";".join(bad))
        return out

    def run(self, workers: int = 1) -> Tuple[List[str], List[list]]:
        return self.header(), _pmap(self.row, self.values, workers)


# ---------------------------------------------------------------------------
# routing sweeps
# ---------------------------------------------------------------------------

ROUTING_HEADER = ["d_r", "obj_state_dependent", "obj_oblivious", "oblivious_fraction", "obj_local_only",
                  "obj_all_to_2", "obj_balanced", "ratio_oblivious", "ratio_local_only", "ratio_all_to_2",
                  "ratio_balanced", "remote_fraction_state_dependent", "iterations", "infeasible"]


@dataclass(frozen=True)
class RoutingSweep:
    lam1: float
    lam2: float
    servers: int
    d_r: Tuple[float, ...]
    base: SystemParams = SystemParams(1.0, 1.0, 2.0, 1.0)
    cap: int = routing.DEFAULT_CAP

    def params_at(self, d_r: float) -> routing.TwoSiteParams:
        return routing.TwoSiteParams(self.lam1, self.lam2, d_r, self.base, (self.servers, self.servers), self.cap)

    def row(self, d_r: float) -> list:
        tp = self.params_at(d_r)
        sd = routing.solve_state_dependent(tp)
        ob = routing.oblivious_optimal(tp)
        base = {}
        bad = []
        for mode in routing.BASELINES:
            try:
                base[mode] = routing.baseline_routing(tp, mode)
            except InstabilityError:
                base[mode] = math.nan
                bad.append(mode)
        _, remote = routing.two_site_stationary(sd.table)
        ref = sd.objective
        return [d_r, ref, ob.objective, ob.fraction, base["local_only"], base["all_to_site2"], base["balanced"],
                ob.objective / ref, base["local_only"] / ref, base["all_to_site2"] / ref, base["balanced"] / ref,
                remote, sd.iterations, ";".join(bad)]

    def run(self, workers: int = 1) -> Tuple[List[str], List[list]]:
        return list(ROUTING_HEADER), _pmap(self.row, self.d_r, workers)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

DELTAS = {"a": 0.5, "b": 1.0, "c": 2.0, "d": 4.0}
ROUTING_SCENARIOS = {"a": (0.3, 0.3, 1), "b": (0.3, 0.3, 2), "c": (0.8, 0.04, 1), "d": (1.7, 0.04, 2)}
DEFAULT_DR_GRID = tuple(grid(0.0, 10.0, 0.5))
DEFAULT_OMEGA_GRID = tuple(float(x) for x in np.round(np.logspace(-1, 1, 41), 6))


def _single_policies(delta):
    t = 2 * delta
    return (HoldOn(1, 0.0), HoldOn(1, t), HoldOn(DETERMINISTIC, t), AlwaysOn(1))


def _dual_policies(extra_h=()):
    pols = [DualOneAlways(2, 2), DualOneAlways(2, 3)]
    pols += [DualOneAlways(2, h) for h in extra_h]
    return tuple(pols) + (DualBothDynamic(), StateDepRates((1.0, 2.0)), AlwaysOn(2))


def _unlimited_policies():
    return (ReactiveUnlimited(1), ReactiveUnlimited(2), ReactiveUnlimited(4), ProactiveUnlimited(), ServerPerRequest())


def preset(name: str):
    """Sweep object for a figure preset ``fig5a`` ... ``fig9d``."""
    key = name.lower()
    if len(key) == 5 and key[:4] in ("fig5", "fig6", "fig7", "fig9") and key[4] in DELTAS:
        fig, panel = key[:4], key[4]
        if fig == "fig9":
            l1, l2, s = ROUTING_SCENARIOS[panel]
            return RoutingSweep(l1, l2, s, DEFAULT_DR_GRID)
        base = SystemParams(0.5, 1.0, DELTAS[panel], 1.0)
        if fig == "fig5":
            return RatioSweep(base, _single_policies(base.delta), tuple(grid(0.01, 0.99, 0.01)), cap_total=1)
        if fig == "fig6":
            return RatioSweep(base, _dual_policies(), tuple(grid(0.01, 1.98, 0.01)), cap_total=2)
        return RatioSweep(base, _unlimited_policies(), tuple(grid(0.1, 3.0, 0.1)), cap_total=None,
                          extra_optima=(("cap_a=1", 1),))
    if key == "fig8":
        base = SystemParams(1.0, 1.0, 2.0, 1.0)
        return RatioSweep(base, _dual_policies(extra_h=(6,)), DEFAULT_OMEGA_GRID, axis="omega", cap_total=2)
    raise ParameterError(f"unknown preset {name!r}; expected fig5a-d, fig6a-d, fig7a-d, fig8 or fig9a-d")


PRESETS = tuple(f"fig{f}{p}" for f in (5, 6, 7) for p in "abcd") + ("fig8",) + tuple(f"fig9{p}" for p in "abcd")


def with_grid(sweep, values: Sequence[float]):
    """Copy of a preset sweep with a different grid."""
    if isinstance(sweep, RoutingSweep):
        return replace(sweep, d_r=tuple(values))
    return replace(sweep, values=tuple(values))


def ratio_sweep(policies: Sequence, base: SystemParams, lambdas: Sequence[float], cap_total: Optional[int] = 1,
                cap_a: Optional[int] = None, workers: int = 1):
    """Header and rows of objective ratios against the per-rate optimum."""
    return RatioSweep(base, tuple(policies), tuple(lambdas), "lambda", cap_total, cap_a).run(workers)
