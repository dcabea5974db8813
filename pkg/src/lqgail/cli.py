"""Command-line front end.

Subcommands: gen, expert, solve, check, diag, batch. Global flags --seed
(overrides the config seed), --out (output directory or file), and
--format {csv,json} (the trace format for solve; the summary is always JSON).
Exit codes for solve: 0 converged, 1 config error, 2 iteration budget
exhausted, 3 instability.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import ConfigError, LqgailError
from .riccati import solve_dare


def _load(path, seed_override):
    cfg = harness.parse_config(path)
    if seed_override is not None:
        cfg.seed = int(seed_override)
    return cfg


def _cmd_gen(args) -> int:
    data = harness.gen_instance(args.d, args.k, args.seed if args.seed is not None else 0,
                                args.target_rho)
    out = args.out or "instance.json"
    harness.dump_instance(data, out)
    print(f"wrote {out} (d={args.d}, k={args.k}, target rho={args.target_rho})")
    return 0


def _cmd_expert(args) -> int:
    cfg = _load(args.config, args.seed)
    if cfg.theta_tilde is None:
        print("error: expert subcommand needs expert.theta_tilde in the config",
              file=sys.stderr)
        return 1
    sol = solve_dare(cfg.instance, cfg.theta_tilde)
    out = args.out or "expert.json"
    Path(out).write_text(json.dumps({
        "K_E": sol.Kstar.tolist(),
        "Pstar": sol.Pstar.tolist(),
        "residual": sol.residual,
        "iterations": sol.iterations}, sort_keys=True, indent=1) + "\n")
    print(f"wrote {out} (residual {sol.residual:.3e}, {sol.iterations} sweeps)")
    return 0


def _trace_to_json(csv_path) -> None:
    rows = Path(csv_path).read_text().strip().split("\n")
    header = rows[0].split(",")
    data = [dict(zip(header, line.split(","))) for line in rows[1:]]
    Path(csv_path).with_suffix(".json").write_text(
        json.dumps(data, indent=1) + "\n")


def _cmd_solve(args) -> int:
    cfg = _load(args.config, args.seed)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        cfg.trace_path = str(outdir / "trace.csv")
        cfg.summary_path = str(outdir / "summary.json")
    if cfg.trace_path is None:
        cfg.trace_path = "trace.csv"
    if cfg.summary_path is None:
        cfg.summary_path = "summary.json"
    art = harness.run_solve(cfg)
    if args.format == "json":
        _trace_to_json(cfg.trace_path)
    s = art.summary
    print(f"status={s['status']} n_iter={s['n_iter']} "
          f"final ||L||={s['final_prox_grad_norm']} "
          f"||K - K_E||_F={s['final_K_error']}")
    print(f"trace -> {cfg.trace_path}  summary -> {cfg.summary_path}")
    return art.exit_code


def _cmd_check(args) -> int:
    cfg = _load(args.config, args.seed)
    report = harness.run_check(cfg)
    verdicts = report["condition_verdicts"]
    print(f"stepsizes: eta={report['eta']:.6e} lambda={report['lambda']:.6e}")
    for name in sorted(verdicts):
        v = verdicts[name]
        state = {True: "pass", False: "FAIL", None: "n/a"}[v.get("passed")]
        extra = v.get("binding") or v.get("reason", "")
        print(f"  {name}: {state}   {extra}")
    if args.out:
        Path(args.out).write_text(
            json.dumps(harness._jsonable(report), sort_keys=True, indent=1) + "\n")
        print(f"report -> {args.out}")
    return 0


def _cmd_diag(args) -> int:
    cfg = _load(args.config, args.seed)
    report = harness.run_diag(args.trace, cfg)
    env = report["envelope"]
    print(f"envelope: clean={env['clean']} max_rho={env['max_rho']}")
    pot = report["potential"]
    if "violations" in pot:
        print(f"potential: {len(pot['violations'])} violations / {pot['checked']} steps "
              f"(s={pot['s']:.4e})")
    else:
        print(f"potential: skipped ({pot['skipped']})")
    lr = report["local_rate"]
    if "upsilon_measured" in lr:
        print(f"local rate: measured={lr['upsilon_measured']:.8f} "
              f"formula={lr['upsilon_formula']} R2={lr['r_squared']:.4f}")
    else:
        print(f"local rate: skipped ({lr['skipped']})")
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
        print(f"report -> {args.out}")
    return 0


def _cmd_batch(args) -> int:
    worst = 0
    for config in args.configs:
        ns = argparse.Namespace(config=config, seed=args.seed, out=None,
                                format=args.format)
        try:
            code = _cmd_solve(ns)
        except (ConfigError, LqgailError) as exc:
            print(f"{config}: error: {exc}", file=sys.stderr)
            code = 1
        print(f"{config}: exit {code}")
        worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lqgail",
                                 description="LQR adversarial imitation: solver, "
                                             "oracle, and diagnostics harness")
    ap.add_argument("--seed", type=int, default=None,
                    help="override the config seed")
    ap.add_argument("--out", type=str, default=None,
                    help="output file (gen/expert/check/diag) or directory (solve)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv",
                    help="trace format for solve (summary is always JSON)")
    # accept the global flags after the subcommand too; SUPPRESS keeps the
    # subparser from clobbering values given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", type=str, default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("csv", "json"),
                        default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True,
                            parser_class=lambda **kw: argparse.ArgumentParser(
                                parents=[common], **kw))

    g = sub.add_parser("gen", help="generate a random instance file")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--target-rho", type=float, default=0.5, dest="target_rho")
    g.set_defaults(fn=_cmd_gen)

    e = sub.add_parser("expert", help="solve the Riccati equation for the expert gain")
    e.add_argument("config")
    e.set_defaults(fn=_cmd_expert)

    s = sub.add_parser("solve", help="run the alternating solver")
    s.add_argument("config")
    s.set_defaults(fn=_cmd_solve)

    c = sub.add_parser("check", help="evaluate the stepsize conditions")
    c.add_argument("config")
    c.set_defaults(fn=_cmd_check)

    d = sub.add_parser("diag", help="run diagnostics over a stored trace")
    d.add_argument("trace")
    d.add_argument("config")
    d.set_defaults(fn=_cmd_diag)

    b = sub.add_parser("batch", help="run several solve configs in sequence")
    b.add_argument("configs", nargs="+")
    b.set_defaults(fn=_cmd_batch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore", invalid="ignore")
    try:
        return args.fn(args)
    except ConfigError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"config error: {exc}{field}", file=sys.stderr)
        return 1
    except LqgailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
