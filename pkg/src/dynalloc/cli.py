"""Command-line front end.

Subcommands: ``eval``, ``sweep``, ``optimal``, ``routing``, ``simulate`` and
``figure``.  Every option may also come from a config file given with
``--config``: one ``key = value`` per line, ``#`` starts a comment, keys are
long option names (``lambda-from`` or ``lambda_from``).  Flags on the command
line override the file.

Exit codes: 0 success, 2 invalid input, 3 instability, 4 solver
non-convergence, 5 ``--check`` failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__, analytic, experiments, routing, sim, smdp
from .core import (ConvergenceError, InstabilityError, ParameterError, SmdpTable, SystemParams)

EXIT_OK, EXIT_INVALID, EXIT_UNSTABLE, EXIT_NONCONVERGED, EXIT_CHECK = 0, 2, 3, 4, 5

_POLICY_OPTS = {"servers": "servers", "k": "k", "t": "T", "b": "b", "rates": "rates", "l": "l", "h": "h",
                "mu1": "mu1", "mu2": "mu2", "s": "s"}


def read_config(path) -> Dict[str, str]:
    """Parse a flat ``key = value`` file into a dict with underscore keys."""
    out = {}
    for no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{no}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_").lower()] = v.strip()
    return out


def fmt(x: float) -> str:
    return f"{x:.10g}"


def _cap(v: str) -> Optional[int]:
    return None if v.lower() in ("none", "auto", "unlimited") else int(v)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _params(p: argparse.ArgumentParser):
    g = p.add_argument_group("system parameters")
    g.add_argument("--lambda", dest="lam", type=float, default=None, help="arrival rate")
    g.add_argument("--mu", type=float, default=1.0, help="service rate per server")
    g.add_argument("--delta", type=float, default=1.0, help="mean setup delay")
    g.add_argument("--omega", type=float, default=1.0, help="weight of the request-time term")


def _policy(p: argparse.ArgumentParser):
    g = p.add_argument_group("policy")
    g.add_argument("--policy", default=None,
                   help=f"one of {', '.join(experiments.POLICY_NAMES)}, or 'table'; "
                        "options may also be inlined as name:key=value")
    g.add_argument("--servers", default=None, help="always-on server count")
    g.add_argument("--k", default=None, help="holding-time shape (integer, or 'det')")
    g.add_argument("--T", dest="t", default=None, help="mean holding time")
    g.add_argument("--b", default=None, help="batching threshold")
    g.add_argument("--rates", default=None, help="state-dependent rates, e.g. 1/2")
    g.add_argument("--l", default=None, help="lower (release) threshold")
    g.add_argument("--h", default=None, help="upper (allocate) threshold")
    g.add_argument("--mu1", default=None)
    g.add_argument("--mu2", default=None)
    g.add_argument("--s", default=None, help="reactive: maximum setups in progress")
    g.add_argument("--file", default=None, help="policy table file (with --policy table)")


def _simcfg(p: argparse.ArgumentParser):
    g = p.add_argument_group("simulation")
    g.add_argument("--seed", type=int, default=12345)
    g.add_argument("--warmup", type=float, default=1e4)
    g.add_argument("--horizon", type=float, default=1e5)
    g.add_argument("--replications", type=int, default=20)


def _out(p: argparse.ArgumentParser):
    p.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
    p.add_argument("--workers", type=int, default=1, help="processes for independent grid points")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynalloc", description="Dynamic server allocation with setup delay.")
    ap.add_argument("--version", action="version", version=f"dynalloc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", default=None, help="key = value file supplying defaults")
        return p

    p = add("eval", "Closed-form R, C and objective of one policy.")
    _params(p)
    _policy(p)

    p = add("sweep", "Objective ratio of policies to the per-rate optimum over an arrival-rate grid.")
    _params(p)
    p.add_argument("--policies", default=None, help="comma-separated policy specs, e.g. holdon:k=1:T=4,mmk")
    p.add_argument("--lambda-from", type=float, default=None)
    p.add_argument("--lambda-to", type=float, default=None)
    p.add_argument("--lambda-step", type=float, default=None)
    p.add_argument("--cap-total", type=_cap, default=1, help="server cap of the optimum ('auto' sizes it per rate)")
    p.add_argument("--cap-a", type=_cap, default=None)
    _out(p)

    p = add("optimal", "Optimal policy by policy iteration; writes the policy table.")
    _params(p)
    p.add_argument("--cap-total", type=int, default=1)
    p.add_argument("--cap-a", type=_cap, default=None)
    p.add_argument("--cap-n", type=_cap, default=None, help="request cap (default: adaptive doubling)")
    p.add_argument("--max-iters", type=int, default=smdp.MAX_ITERS)
    p.add_argument("--output", "-o", default=None, help="policy table path")

    p = add("routing", "Two-site routing comparison over a transfer-time grid.")
    g = p.add_argument_group("two-site parameters")
    g.add_argument("--lam1", type=float, default=None)
    g.add_argument("--lam2", type=float, default=None)
    g.add_argument("--servers", type=int, default=1, help="servers per site")
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--delta", type=float, default=2.0)
    g.add_argument("--omega", type=float, default=1.0)
    g.add_argument("--cap", type=int, default=routing.DEFAULT_CAP, help="cap on n1 + n2")
    p.add_argument("--dr-from", type=float, default=0.0)
    p.add_argument("--dr-to", type=float, default=10.0)
    p.add_argument("--dr-step", type=float, default=0.5)
    _out(p)

    p = add("simulate", "Discrete-event estimate of R, C and the objective.")
    _params(p)
    _policy(p)
    _simcfg(p)
    p.add_argument("--verbose", "-v", action="store_true", help="emit per-replication CSV")
    p.add_argument("--csv", default=None, help="per-replication CSV path (implies --verbose)")
    p.add_argument("--check", action="store_true", help="exit 5 unless R and C are within 3 standard errors "
                                                        "of the exact values")

    p = add("figure", "Reproduce the data behind a figure preset as CSV.")
    p.add_argument("name", nargs="?", default=None, help=", ".join(experiments.PRESETS))
    p.add_argument("--grid-from", type=float, default=None, help="override the preset grid")
    p.add_argument("--grid-to", type=float, default=None)
    p.add_argument("--grid-step", type=float, default=None)
    _out(p)
    return ap


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        conf = read_config(args.config)
        if "lambda" in conf:
            conf["lam"] = conf.pop("lambda")
        subp = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subp._actions}
        bools = {a.dest for a in subp._actions if isinstance(a, argparse._StoreTrueAction)}
        unknown = sorted(set(conf) - known - {"command"})
        if unknown:
            raise ParameterError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        if conf.get("command", args.command) != args.command:
            raise ParameterError(f"config is for '{conf['command']}', not '{args.command}'")
        conf.pop("command", None)
        for k in list(conf):
            if k in bools:
                conf[k] = conf[k].lower() in ("1", "true", "yes", "on")
        subp.set_defaults(**conf)
        args = ap.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _system(args, need_lam=True) -> SystemParams:
    if args.lam is None:
        if need_lam:
            raise ParameterError("--lambda is required")
        return None
    return SystemParams(args.lam, args.mu, args.delta, args.omega)


def _load_table(path):
    text = Path(path).read_text()
    cols = next((ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    if cols.split()[:1] == ["n1"]:
        return routing.TwoSiteTable.from_text(text), None
    table, meta = smdp.PolicyTable.from_text(text)
    return table, meta


def _policy_from_args(args):
    """Policy object (or ``("table", table, meta)``) from --policy and its option flags."""
    if not args.policy:
        raise ParameterError("--policy is required")
    name = args.policy.split(":", 1)[0].strip().lower()
    if name == "table":
        if not args.file:
            raise ParameterError("--policy table needs --file")
        return ("table",) + _load_table(args.file)
    spec = args.policy
    kind = experiments._ALIASES.get(name, name)
    allowed = experiments._KINDS.get(kind, (None, {}))[1]
    for dest, key in _POLICY_OPTS.items():
        v = getattr(args, dest)
        if v is None:
            continue
        if key.lower() not in allowed:
            raise ParameterError(f"--{key} does not apply to policy {name}")
        spec += f":{key}={v}"
    return experiments.parse_policy(spec)


def _emit(text: str, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows, path):
    if path:
        experiments.write_csv(header, rows, path)
    else:
        experiments.write_csv(header, rows, sys.stdout)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    pol = _policy_from_args(args)
    if isinstance(pol, tuple):
        _, table, meta = pol
        if meta is None:
            raise ParameterError("eval supports single-site tables only")
        p = _system(args, need_lam=False) or smdp.params_from_header(meta)
        pol = SmdpTable(table)
    else:
        p = _system(args)
    m = analytic.evaluate(pol, p)
    print(f"R={fmt(m.r)} C={fmt(m.c)} objective={fmt(m.objective(p))}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.policies:
        raise ParameterError("--policies is required")
    if None in (args.lambda_from, args.lambda_to, args.lambda_step):
        raise ParameterError("--lambda-from, --lambda-to and --lambda-step are required")
    pols = [experiments.parse_policy(s) for s in args.policies.split(",") if s.strip()]
    lams = experiments.grid(args.lambda_from, args.lambda_to, args.lambda_step)
    if lams[0] <= 0:
        raise ParameterError("arrival rates must be > 0")
    if args.cap_total is not None and lams[-1] >= args.cap_total * args.mu:
        raise InstabilityError(f"the optimum with cap_total={args.cap_total} is unstable at lambda={lams[-1]}")
    base = SystemParams(lams[0], args.mu, args.delta, args.omega)
    header, rows = experiments.ratio_sweep(pols, base, lams, args.cap_total, args.cap_a, args.workers)
    _csv(header, rows, args.output)
    return EXIT_OK


def cmd_optimal(args) -> int:
    p = _system(args)
    res = smdp.solve_optimal(p, cap_total=args.cap_total, cap_a=args.cap_a, cap_n=args.cap_n,
                             max_iters=args.max_iters)
    if args.output:
        extra = {"objective": res.objective, "iterations": res.iterations}
        Path(args.output).write_text(res.policy.to_text(p, extra))
    print(f"objective={fmt(res.objective)} iterations={res.iterations} cap_n={res.caps.cap_n}")
    return EXIT_OK


def cmd_routing(args) -> int:
    if args.lam1 is None or args.lam2 is None:
        raise ParameterError("--lam1 and --lam2 are required")
    base = SystemParams(max(args.lam1 + args.lam2, 1e-12), args.mu, args.delta, args.omega)
    sweep = experiments.RoutingSweep(args.lam1, args.lam2, args.servers,
                                     tuple(experiments.grid(args.dr_from, args.dr_to, args.dr_step)), base, args.cap)
    sweep.params_at(args.dr_from)  # validate before solving
    header, rows = sweep.run(args.workers)
    _csv(header, rows, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = sim.SimConfig(args.seed, args.warmup, args.horizon, args.replications)
    pol = _policy_from_args(args)
    csv_out = args.csv if args.csv else (sys.stdout if args.verbose else None)
    exact = None
    if isinstance(pol, tuple):
        _, table, meta = pol
        if meta is None:
            est = sim.simulate_policy_table(table, table.tp, cfg, csv_out=None)
            exact = ("objective", -_two_site_gain(table))
        else:
            p = _system(args, need_lam=False) or smdp.params_from_header(meta)
            est = sim.simulate_policy_table(table, p, cfg, csv_out=None)
            exact = ("objective", smdp.evaluate_table(table, p))
    else:
        p = _system(args)
        est = sim.simulate(pol, p, cfg, csv_out=None)
        if args.check:
            m = analytic.evaluate(pol, p)
            exact = ("rc", m)
    if csv_out is not None:
        if hasattr(csv_out, "write"):
            csv_out.write(est.to_csv())
        else:
            Path(csv_out).write_text(est.to_csv())
    print(f"R={fmt(est.r_mean)} +/- {fmt(est.r_ci_halfwidth)} C={fmt(est.c_mean)} +/- {fmt(est.c_ci_halfwidth)} "
          f"objective={fmt(est.objective_mean)} +/- {fmt(est.objective_ci_halfwidth)} "
          f"(95% CI, {est.n} replications, rng={est.rng} seed={est.seed})")
    if args.check:
        if exact is None:
            raise ParameterError("--check needs an exact reference for this policy")
        if exact[0] == "rc":
            m = exact[1]
            ok = abs(est.r_mean - m.r) <= 3 * est.r_se and abs(est.c_mean - m.c) <= 3 * est.c_se
            print(f"check: exact R={fmt(m.r)} C={fmt(m.c)} -> {'PASS' if ok else 'FAIL'}")
        else:
            ok = abs(est.objective_mean - exact[1]) <= 3 * est.objective_se
            print(f"check: exact objective={fmt(exact[1])} -> {'PASS' if ok else 'FAIL'}")
        if not ok:
            return EXIT_CHECK
    return EXIT_OK


def _two_site_gain(table) -> float:
    from .smdp import value_determination
    model = routing.TwoSiteModel(table.tp)
    gain, _, _ = value_determination(model, table.actions.astype("int64"), model.space.index(0, 0, 0, 0, 0, 0))
    return gain


def cmd_figure(args) -> int:
    if not args.name:
        raise ParameterError(f"a preset name is required: {', '.join(experiments.PRESETS)}")
    sweep = experiments.preset(args.name)
    given = [args.grid_from, args.grid_to, args.grid_step]
    if any(v is not None for v in given):
        if None in given:
            raise ParameterError("--grid-from, --grid-to and --grid-step go together")
        sweep = experiments.with_grid(sweep, experiments.grid(*given))
    header, rows = sweep.run(args.workers)
    _csv(header, rows, args.output)
    return EXIT_OK


COMMANDS = {"eval": cmd_eval, "sweep": cmd_sweep, "optimal": cmd_optimal, "routing": cmd_routing,
            "simulate": cmd_simulate, "figure": cmd_figure}


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0) if isinstance(exc.code, int) else EXIT_INVALID
    except InstabilityError as exc:
        print(f"error: unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ConvergenceError as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ParameterError, ValueError, KeyError, OSError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
