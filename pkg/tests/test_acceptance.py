"""Acceptance criteria 1-9, one test each; every test records a PASS/FAIL line."""

import io
import math

import numpy as np
import pytest

from dynalloc import analytic as A
from dynalloc import chains as Ch
from dynalloc import experiments as E
from dynalloc import routing as R
from dynalloc import smdp as S
from dynalloc.cli import main
from dynalloc.core import (DETERMINISTIC, Batching, DualBothDynamic, DualOneAlways, HoldOn, ProactiveUnlimited,
                           ReactiveUnlimited, ServerPerRequest, StateDepRates, SystemParams, stability_limit)
from dynalloc.sim import SimConfig, simulate

pytestmark = pytest.mark.slow

DELTAS = (0.5, 1.0, 2.0, 4.0)


# 1 ---------------------------------------------------------------------------

ORACLE_POLICIES = (
    HoldOn(1, 2.0), HoldOn(4, 2.0), HoldOn(DETERMINISTIC, 2.0),
    Batching(1), Batching(2), Batching(4),
    DualOneAlways(2, 2), DualOneAlways(3, 3), DualOneAlways(2, 3),
    DualBothDynamic(), StateDepRates((1.0, 2.0)),
    ReactiveUnlimited(1), ReactiveUnlimited(2), ReactiveUnlimited(4),
    ProactiveUnlimited(), ServerPerRequest(),
)
LOAD_FRACTIONS = (0.1, 0.3, 0.5, 0.7, 0.9)
# shortened from the 1e4/1e5/20 defaults so the grid fits in a few minutes on one core
ORACLE_CFG = dict(warmup=1e3, horizon=1e4, replications=10)


def _limit(pol, p):
    lim = stability_limit(pol, p)
    return p.mu if math.isinf(lim) else lim  # unlimited pools: reference capacity mu


def test_c1_closed_form_vs_simulator(verdict):
    cells = agree = 0
    misses = []
    for d in DELTAS:
        for pol in ORACLE_POLICIES:
            for frac in LOAD_FRACTIONS:
                base = SystemParams(1.0, 1.0, d, 1.0)
                p = base.replace(lam=frac * _limit(pol, base))
                m = A.evaluate(pol, p)
                est = simulate(pol, p, SimConfig(seed=10_000 + cells, **ORACLE_CFG))
                ok = (abs(est.r_mean - m.r) <= 3 * est.r_se + 1e-12
                      and abs(est.c_mean - m.c) <= 3 * est.c_se + 1e-12)
                cells += 1
                agree += ok
                if not ok:
                    misses.append(f"{E.policy_label(pol)}@lam={p.lam:g},delta={d:g}")
    share = agree / cells
    ok = verdict(1, share >= 0.95, f"{agree}/{cells} cells within 3 SE ({share:.1%}); misses: {', '.join(misses)}")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c2_known_reductions(verdict):
    worst = {"batching": 0.0, "statedep": 0.0, "dual": 0.0, "reactive": 0.0}

    def rel(a, b):
        return abs(a - b) / abs(b)

    for d in DELTAS:
        for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
            p = SystemParams(lam, 1.0, d, 1.0)
            b, h = A.single_batching(p, 1), A.single_hold_on(p, 1, 0.0)
            worst["batching"] = max(worst["batching"], rel(b.r, h.r), rel(b.c, h.c))
            for k, t in ((1, 0.0), (3, 2.0), (DETERMINISTIC, 1.5)):
                s, h = A.single_statedep_rates(p, (1.0,), k, t), A.single_hold_on(p, k, t)
                worst["statedep"] = max(worst["statedep"], rel(s.r, h.r), rel(s.c, h.c))
            p2 = p.replace(lam=2 * lam)
            for hh in (1, 2, 3, 5):
                g, e = A.dual_one_always(p2, hh, hh), A.dual_one_always_equal_thresholds(p2, hh)
                worst["dual"] = max(worst["dual"], rel(g.r, e.r), rel(g.c, e.c))
            m = A.reactive_unlimited(p, 1)
            want_c = lam * (1 + p.mu / (lam + 1 / d))
            worst["reactive"] = max(worst["reactive"], rel(m.r, 1 / p.mu + d), rel(m.c, want_c))
    ok = (worst["batching"] <= 1e-12 and worst["statedep"] <= 1e-12 and worst["dual"] <= 1e-10
          and worst["reactive"] <= 1e-12)
    verdict(2, ok, "max relative gaps " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


# 3 ---------------------------------------------------------------------------

def crossover(p):
    a, b, c = p.omega * p.delta ** 2, p.omega * p.delta + 1.0, -p.mu
    return (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)


def test_c3_smdp_matches_single_server_optimum(verdict):
    worst, wrong = 0.0, []
    for d in DELTAS:
        lc = crossover(SystemParams(0.5, 1.0, d, 1.0))
        for lam in np.linspace(0.04, 0.96, 20):
            p = SystemParams(float(lam), 1.0, d, 1.0)
            res = S.solve_optimal(p, cap_total=1)
            worst = max(worst, abs(res.objective - A.single_optimal_objective(p).value) / res.objective)
            if abs(lam - lc) < 1e-3:
                continue
            act = res.policy.action(0, 1, 0)  # idle allocated server, nothing waiting
            if act != (S.Action.D if lam < lc else S.Action.NC):
                wrong.append(f"delta={d:g},lam={lam:.3f}:{act.name}")
    ok = worst <= 1e-6 and not wrong and abs(crossover(SystemParams(0.5, 1, 2, 1)) - 0.25) < 1e-14
    verdict(3, ok, f"max relative gap {worst:.1e}; crossover at delta=2 is {crossover(SystemParams(0.5, 1, 2, 1)):g}; "
                   f"regime mismatches: {wrong or 'none'}")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c4_deterministic_holdon_within_twenty_percent(verdict):
    pol = HoldOn(DETERMINISTIC, 4.0)
    ratios = []
    for lam in E.grid(0.15, 0.95, 0.01):
        p = SystemParams(lam, 1.0, 2.0, 1.0)
        ratios.append((A.evaluate_objective(pol, p) / S.solve_optimal(p, cap_total=1).objective, lam))
    top, at = max(ratios)
    ok = top <= 1.21
    verdict(4, ok, f"max ratio {top:.4f} at lam={at:g} over {len(ratios)} points (<= 1.20: {top <= 1.20})")
    assert ok


# 5 ---------------------------------------------------------------------------

# (preset, reduced grid, capacity or None); the grids thin out the presets to keep the run short
RATIO_PRESETS = (
    [(f"fig5{x}", E.grid(0.01, 0.97, 0.04) + [0.99], 1.0) for x in "abcd"]
    + [(f"fig6{x}", E.grid(0.02, 1.94, 0.08) + [1.98], 2.0) for x in "abcd"]
    + [(f"fig7{x}", E.grid(0.1, 2.9, 0.4), None) for x in "abcd"]
    + [("fig8", list(E.DEFAULT_OMEGA_GRID[::4]), None)]
)


def _sweep_rows(name, values):
    head, rows = E.with_grid(E.preset(name), values).run()
    return head, rows


@pytest.fixture(scope="module")
def preset_rows():
    return {name: (_sweep_rows(name, vals), cap) for name, vals, cap in RATIO_PRESETS}


def test_c5_ratio_sanity(verdict, preset_rows):
    low, far = [], []
    for name, ((head, rows), cap) in preset_rows.items():
        cols = [i for i, h in enumerate(head) if h.startswith("ratio[")]
        for row in rows:
            for i in cols:
                if not math.isnan(row[i]) and row[i] < 1 - 1e-8:
                    low.append(f"{name}:{head[i]}@{row[0]}")
        if cap is not None:
            last = rows[-1]
            assert last[0] == pytest.approx(0.99 * cap)
            far += [f"{name}:{head[i]}={last[i]:.4f}" for i in cols if not abs(last[i] - 1) <= 0.05]
    ok = not low and not far
    verdict(5, ok, f"ratios below 1-1e-8: {low or 'none'}; curves not within 5% of 1 at 0.99 x capacity: "
                   f"{far or 'none'}")
    assert ok


# 6 ---------------------------------------------------------------------------

def _balance_cases():
    for d in DELTAS:
        for frac in (0.3, 0.7, 0.95):
            p1, p2 = SystemParams(frac, 1.0, d, 1.0), SystemParams(2 * frac, 1.0, d, 1.0)
            for k in (1, 4):
                yield f"holdon k={k}", A.holdon_state_probs(p1, k, 2.0), Ch.single_chain(p1, (1.0,), k, 2.0, 10)
            yield ("statedep", A.statedep_state_probs(p2, (1.0, 2.0), 2, 1.0),
                   Ch.single_chain(p2, (1.0, 2.0), 2, 1.0, 10))
            for l, h in ((2, 2), (2, 3), (1, 4)):
                yield (f"dual l={l} h={h}", A.dual_one_always_state_probs(p2, l, h),
                       Ch.dual_one_always_chain(p2, l, h, levels=10))
            yield "dual-both", A.dual_both_dynamic_state_probs(p2), Ch.dual_both_dynamic_chain(p2, 10)
            p3 = SystemParams(3 * frac, 1.0, d, 1.0)
            yield "reactive s=2", A.reactive_state_probs(p3, 2), Ch.reactive_chain(p3, 2, 10, 10)
            yield "proactive", A.proactive_state_probs(p3), Ch.proactive_chain(p3, 10, 10)


def test_c6_balance_residuals(verdict):
    worst, low_mass, n = 0.0, [], 0
    for name, probs, chain in _balance_cases():
        n += 1
        if probs.mass < 1 - 1e-9:
            low_mass.append(name)
        worst = max(worst, chain.balance_residual(probs.as_dict()))
    ok = worst < 1e-10 and not low_mass
    verdict(6, ok, f"{n} distributions, max residual {worst:.1e}, short of 1-1e-9 mass: {low_mass or 'none'}")
    assert ok


# 7 ---------------------------------------------------------------------------

def _pi_instances():
    for name, vals, _ in RATIO_PRESETS:
        sw = E.preset(name)
        for x in vals[::6] + [vals[-1]]:
            p = sw.params_at(x)
            cap = E.unlimited_cap(p.lam, p.mu) if sw.cap_total is None else sw.cap_total
            yield f"{name}@{x}", p, cap


def test_c7_policy_iteration_properties(verdict):
    rising, slow, moving, count = [], [], [], 0
    for label, p, cap in _pi_instances():
        res = S.solve_optimal(p, cap_total=cap)
        count += 1
        h = np.asarray(res.history)
        if np.any(np.diff(h) > 1e-12 * np.abs(h[1:])):
            rising.append(label)
        if res.iterations > 200:
            slow.append(f"{label}:{res.iterations}")
        a, b = res.cap_trace[-2][1], res.cap_trace[-1][1]
        if abs(a - b) >= 1e-6 * abs(b):
            moving.append(label)
    for name in ("fig9a", "fig9d"):
        sw = E.preset(name)
        res = R.solve_state_dependent(sw.params_at(4.0))
        count += 1
        h = np.asarray(res.history)
        if np.any(np.diff(h) > 1e-12 * np.abs(h[1:])):
            rising.append(name)
        if res.iterations > 200:
            slow.append(f"{name}:{res.iterations}")
    ok = not (rising or slow or moving)
    verdict(7, ok, f"{count} instances; increasing objective: {rising or 'none'}; over 200 iterations: "
                   f"{slow or 'none'}; cap doubling moved >= 1e-6: {moving or 'none'}")
    assert ok


# 8 ---------------------------------------------------------------------------

DR_GRID = (0.0, 1.0, 2.0, 4.0, 6.0, 10.0)


def test_c8_routing_ordering_and_gap(verdict):
    broken, gaps = [], {}
    for panel in "abcd":
        head, rows = E.with_grid(E.preset(f"fig9{panel}"), DR_GRID).run()
        for r in rows:
            row = dict(zip(head, r))
            sd, ob = row["obj_state_dependent"], row["obj_oblivious"]
            if sd > ob * (1 + 1e-8):
                broken.append(f"fig9{panel}@{row['d_r']}:sd>ob")
            for b in ("obj_local_only", "obj_all_to_2", "obj_balanced"):
                if not math.isnan(row[b]) and ob > row[b] * (1 + 1e-8):
                    broken.append(f"fig9{panel}@{row['d_r']}:ob>{b}")
        gaps[panel] = max(dict(zip(head, r))["ratio_oblivious"] for r in rows)
    ok = not broken and gaps["c"] <= 1.25 and gaps["d"] <= 1.25
    verdict(8, ok, f"ordering violations: {broken or 'none'}; max oblivious/state-dependent ratio "
                   + ", ".join(f"fig9{k}={v:.4f}" for k, v in gaps.items()))
    assert ok


# 9 ---------------------------------------------------------------------------

def test_c9_determinism(verdict, tmp_path, capsys):
    runs = {
        "figure": ["figure", "fig6c", "--grid-from", "0.5", "--grid-to", "1.5", "--grid-step", "0.5"],
        "routing": ["routing", "--lam1", "0.8", "--lam2", "0.04", "--cap", "30", "--dr-from", "0", "--dr-to", "2",
                    "--dr-step", "2"],
        "simulate": ["simulate", "--policy", "dual-both", "--lambda", "1.2", "--delta", "2", "--seed", "77",
                     "--warmup", "100", "--horizon", "2000", "--replications", "4"],
    }
    same = {}
    for name, argv in runs.items():
        outs = []
        for i in range(2):
            path = tmp_path / f"{name}{i}.csv"
            flag = ["--csv", str(path)] if name == "simulate" else ["-o", str(path)]
            assert main(argv + flag) == 0
            outs.append(path.read_bytes())
        same[name] = outs[0] == outs[1] and len(outs[0]) > 0
    capsys.readouterr()
    ok = all(same.values())
    verdict(9, ok, "byte-identical CSV on rerun: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
