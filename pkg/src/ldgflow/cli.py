"""Command line entry point: ``run``, ``check``, ``potential-table``, ``report``.

Exit codes: 0 success, 1 scheme failure (or a failed check), 2 config error.
"""

import argparse
import csv
import math
import os
import sys

from . import fields as fl
from .checks import run_battery
from .config import load_config, with_overrides
from .diagnostics import lambda_bound, positivity_audit, read_csv, summary, write_csv
from .dynamics import State, run
from .errors import ConfigError, SchemeFailure
from .potential import potential_table

EXIT_OK, EXIT_SCHEME, EXIT_CONFIG = 0, 1, 2


def _snapshot_path(cfg, step):
    name = f"{cfg.output.snapshot_prefix}_{step:08d}.bin"
    return os.path.join(cfg.output.directory, name)


def _write_state(path, state):
    fl.write_snapshot(path, state.pack(), state.grid, "state", state.t, state.step,
                      state.floor_hits)


def read_state(path, grid=None):
    """Load a state snapshot, optionally checking it matches ``grid``."""
    data, meta = fl.read_snapshot(path)
    if meta["kind"] != fl.KINDS["state"]:
        raise ConfigError("snapshot does not hold a full state", str(path))
    if grid is not None and meta["grid"] != grid:
        raise ConfigError(f"snapshot grid {meta['grid']} differs from config grid {grid}",
                          str(path))
    return State.unpack(meta["grid"], data, meta["time"], meta["step"], meta["extra"])


def cmd_run(args):
    cfg = load_config(args.config)
    if args.steps is not None:
        cfg = with_overrides(cfg, "scheme", steps=args.steps)
    if args.snapshot_every is not None:
        cfg = with_overrides(cfg, "output", snapshot_every=args.snapshot_every)
    if args.output is not None:
        cfg = with_overrides(cfg, "output", directory=args.output)
    params = cfg.scheme_params()
    os.makedirs(cfg.output.directory, exist_ok=True)
    if args.restart:
        state = read_state(args.restart, cfg.make_grid())
    else:
        state = cfg.initial_state()
    every = cfg.output.snapshot_every

    def on_step(st):
        if every and st.step % every == 0:
            _write_state(_snapshot_path(cfg, st.step), st)

    csv_path = os.path.join(cfg.output.directory, cfg.output.diagnostics)
    try:
        final, records = run(state, params, cfg.scheme.steps, cfg.output.diag_every, on_step)
    except SchemeFailure as exc:
        write_csv(csv_path, getattr(exc, "records", []))
        print(f"scheme failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SCHEME
    write_csv(csv_path, records)
    _write_state(os.path.join(cfg.output.directory, f"{cfg.output.snapshot_prefix}_final.bin"),
                 final)
    print(summary(records, lambda_bound(params)))
    return EXIT_OK


def cmd_check(args):
    results = run_battery(args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_SCHEME


def cmd_table(args):
    rows = potential_table(args.kind, args.points)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["lambda1", "lambda2", "f", "grad_norm", "iters"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row[:4]] + [row[4]])
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def cmd_report(args):
    records = read_csv(args.diagnostics)
    if not records:
        raise ConfigError("diagnostics file has no records", args.diagnostics)
    lam = None
    if args.config:
        lam = lambda_bound(load_config(args.config).scheme_params())
    print(summary(records, lam))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "total_energy", "energy_drift", "entropy", "entropy_production",
                        "entropy_rate", "log_theta_min", "q_eig_min", "q_eig_max"])
            prev = None
            for r in records:
                rate = (r.entropy - prev.entropy) / (r.t - prev.t) if prev else math.nan
                w.writerow([repr(v) for v in (r.t, r.total_energy, r.energy_drift, r.entropy,
                                              r.entropy_production, rate, math.log(r.theta_min),
                                              r.q_eig_min, r.q_eig_max)])
                prev = r
    audit = positivity_audit(records, lam)
    return EXIT_SCHEME if audit.violated else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ldgflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="advance a configured run")
    r.add_argument("--config", required=True)
    r.add_argument("--steps", type=int)
    r.add_argument("--snapshot-every", type=int)
    r.add_argument("--output", help="output directory (overrides the config)")
    r.add_argument("--restart", help="state snapshot to continue from")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run the identity and property battery")
    c.add_argument("--seed", type=int, default=20240601)
    c.set_defaults(func=cmd_check)

    t = sub.add_parser("potential-table", help="CSV sweep of the singular potential")
    t.add_argument("--kind", choices=("uniaxial", "biaxial"), default="uniaxial")
    t.add_argument("--points", type=int, default=40)
    t.add_argument("--output")
    t.set_defaults(func=cmd_table)

    rp = sub.add_parser("report", help="summarise a diagnostics CSV")
    rp.add_argument("--diagnostics", required=True)
    rp.add_argument("--config")
    rp.add_argument("--csv", help="write plot-ready CSV here")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemeFailure as exc:
        print(f"scheme failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SCHEME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
