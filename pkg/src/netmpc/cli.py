"""Command-line entry points: ``netmpc <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible QP,
4 initial state outside the admissible set.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .admissible import admissible_set, is_admissible
from .model import ConfigError
from .qp import QPError, QPInstance, solve
from .simulate import (VARIANTS, ExperimentSpec, compare_experiments, dump_json, comparison_specs,
                       run_closed_loop, svg_lines, trace_svg)
from .tables import TableError, load_or_build, lqr_and_terminal, reachable_dtilde

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_INADMISSIBLE = 4


def _load_config(path):
    return cfgmod.benchmark_config() if path is None else cfgmod.load(path)


def parse_script(text: str | None, problem) -> dict:
    """``"D=max,H=1,S=min"`` -> ``{"d_script": 2, "h_script": 1, "s_script": 1}``."""
    out = {}
    if not text:
        return out
    bounds = {"D": (problem.d_min, problem.d_max), "H": problem.h_bounds, "S": problem.s_bounds}
    for part in text.split(","):
        name, _, val = part.partition("=")
        name = name.strip().upper()
        if name not in bounds or not val:
            raise ConfigError(f"bad script entry {part!r}; expected D=, H= or S=")
        lo, hi = bounds[name]
        val = val.strip().lower()
        age = {"min": lo, "max": hi}.get(val)
        if age is None:
            try:
                age = int(val)
            except ValueError:
                raise ConfigError(f"bad script value {val!r}") from None
        if not lo <= age <= hi:
            raise ConfigError(f"{name}={age} outside [{lo}, {hi}]")
        out[f"{name.lower()}_script"] = age
    return out


def _tables(args, problem):
    path = getattr(args, "tables", None)
    return load_or_build(problem, path, jobs=args.jobs)


def _check_x0(tables, x0) -> bool:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        poly = admissible_set(tables.problem, tables.terminal)
    inside, _, _ = is_admissible(poly, x0)
    return bool(inside)


# -- subcommands ------------------------------------------------------------------------------
def cmd_validate_config(args) -> int:
    cfg = _load_config(args.config)
    p = cfg.problem()
    print(f"ok: n={p.n} m={p.m} N={p.N} d=[{p.d_min},{p.d_max}] h={list(p.h_bounds)} s={list(p.s_bounds)}")
    if args.dump:
        cfgmod.dump(cfg, args.dump)
    return EXIT_OK


def cmd_precompute(args) -> int:
    p = _load_config(args.config).problem()
    t0 = time.perf_counter()
    tables, hit = load_or_build(p, args.out, jobs=args.jobs)
    elapsed = time.perf_counter() - t0
    print(f"cache: {'hit' if hit else 'built'} ({args.out})")
    print(f"reachable supports: {[sorted(d) for d in reachable_dtilde(p.chain)]}")
    for key, rows in tables.sizes().items():
        print(f"  {key}: {rows} rows")
    print(f"elapsed: {elapsed:.2f} s")
    return EXIT_OK


def cmd_admissible(args) -> int:
    cfg = _load_config(args.config)
    p = cfg.problem()
    _, terminal = lqr_and_terminal(p)
    t0 = time.perf_counter()
    poly = admissible_set(p, terminal)
    x0 = np.asarray(args.x0, dtype=float) if args.x0 is not None else cfg.x0
    inside, row, val = is_admissible(poly, x0)
    print(f"admissible set: {poly.M.shape[0]} rows ({time.perf_counter() - t0:.2f} s)")
    print(f"x0 = {x0.tolist()}  admissible: {'true' if inside else 'false'}  (worst row {row}: {val:+.4g})")
    if args.out:
        dump_json({"M0": poly.M, "n0": poly.n, "x0": x0, "admissible": bool(inside)}, args.out)
    return EXIT_OK if inside else EXIT_INADMISSIBLE


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    p = cfg.problem()
    scripts = parse_script(args.script, p)
    exp = cfg.experiment
    spec = ExperimentSpec(args.variant or exp.get("variant", "stochastic"),
                          int(args.horizon or exp.get("horizon", 60)), args.seed, **scripts)
    tables, _ = _tables(args, p)
    x0 = cfg.x0
    if spec.variant in ("stochastic", "deterministic") and not _check_x0(tables, x0):
        print(f"x0 = {x0.tolist()} is not admissible", file=sys.stderr)
        return EXIT_INADMISSIBLE
    trace = run_closed_loop(spec, tables, x0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.variant}_seed{spec.seed}"
    (out / f"{stem}.csv").write_text(trace.to_csv())
    summary = trace.summary()
    summary["violation_rows"] = trace.violations
    dump_json(summary, out / f"{stem}.json")
    (out / f"{stem}.svg").write_text(trace_svg(trace))
    print(json.dumps(trace.summary()))
    for k, kind, row in trace.violations:
        print(f"violation: k={k} {kind} row {row}")
    return EXIT_INFEASIBLE if trace.truncated_at is not None else EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    p = cfg.problem()
    tables, _ = _tables(args, p)
    horizon = int(args.horizon or cfg.experiment.get("horizon", 60))
    report = compare_experiments(comparison_specs(p, horizon), tables, cfg.x0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(report["csv"])
    dump_json(report["summary"], out / "compare.json")
    (out / "compare.svg").write_text(
        svg_lines({nm: t.J for nm, t in report["traces"].items()}, "running cost"))
    for nm, s in report["summary"].items():
        print(f"{nm:18s} final J = {s['final_cost']:.2f}  violations = {s['violations']}")
    truncated = any(t.truncated_at is not None for t in report["traces"].values())
    return EXIT_INFEASIBLE if truncated else EXIT_OK


def cmd_qp(args) -> int:
    try:
        inst = QPInstance.from_dict(json.loads(Path(args.instance).read_text()))
    except (OSError, KeyError, ValueError, QPError) as exc:
        print(f"error: cannot read QP instance: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = solve(inst)
    if res.status != "optimal":
        print(json.dumps({"status": res.status, "certificate": res.certificate.tolist()}))
        return EXIT_INFEASIBLE
    print(json.dumps({"status": res.status, "u": res.u.tolist(), "objective": res.objective,
                      "active": list(res.active), "iterations": res.iterations, "kkt": res.kkt}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="netmpc", description="Stochastic MPC over lossy networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, tables=True):
        sp.add_argument("--config", help="TOML or JSON run configuration (default: benchmark)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for table synthesis")
        if tables:
            sp.add_argument("--tables", help="table cache file (built if missing or stale)")

    sp = sub.add_parser("validate-config", help="load and check a configuration")
    sp.add_argument("--config")
    sp.add_argument("--dump", help="write the normalized configuration here")
    sp.set_defaults(func=cmd_validate_config)

    sp = sub.add_parser("precompute", help="build the offline tables")
    common(sp, tables=False)
    sp.add_argument("--out", default="tables.bin")
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("admissible", help="compute the admissible initial-state set")
    sp.add_argument("--config")
    sp.add_argument("--x0", type=float, nargs="+", help="state to test (default: configured x0)")
    sp.add_argument("--out", default="x0set.json")
    sp.set_defaults(func=cmd_admissible)

    sp = sub.add_parser("simulate", help="run one closed loop")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--script", help='scripted ages, e.g. "D=max,H=max,S=max"')
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="stochastic versus buffered MPC with H at its maximum")
    common(sp)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("qp", help="solve a QP instance stored as JSON {V, v, W, w}")
    sp.add_argument("--instance", required=True)
    sp.set_defaults(func=cmd_qp)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TableError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
