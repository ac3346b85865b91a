"""Command line front end: ``emlmc convergence|compare|run --config FILE``."""
import argparse
import json
import sys

from . import config as config_mod
from . import experiments
from .linalg import SolverError


def _parser():
    p = argparse.ArgumentParser(prog="emlmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("convergence", "Test 1 error table over L = 1..levels"),
                        ("compare", "ensemble vs independent MLMC on identical samples"),
                        ("run", "EMLMC estimate for a configured problem")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="run configuration file")
        s.add_argument("--levels", type=int, help="override levels.L")
        s.add_argument("--replicas", type=int, help="override run.replicas")
        s.add_argument("--seed", type=int, help="override run.seed")
        s.add_argument("--jobs", type=int, help="worker processes")
        s.add_argument("--output", help="override run.output directory")
    return p


def _error(kind, message, **extra):
    line = {"status": "error", "kind": kind, "message": str(message)}
    line.update(extra)
    print(json.dumps(line), file=sys.stderr)


def _report(args, cfg):
    if args.command == "convergence":
        res = experiments.run_convergence(cfg, out_dir=cfg.output)
        print(f"{'L':>2} {'E_L2':>12} {'rate':>6} {'E_H1':>12} {'rate':>6}")
        for r in res.rows:
            print(f"{r.L:>2} {r.E_L2:12.4e} {r.rate_L2:6.2f} {r.E_H1:12.4e} {r.rate_H1:6.2f}")
        print(f"energy audit holds: {res.audits_hold}  wall time {res.wall_time:.1f} s")
        return 0
    if args.command == "compare":
        res = experiments.run_compare(cfg, out_dir=cfg.output)
        print(f"max |psi_E - psi_I| = {res.max_diff:.3e}")
        print(f"solve time ensemble {res.time_ensemble:.2f} s, independent "
              f"{res.time_independent:.2f} s, ratio {res.time_ratio:.2f}")
        print(f"raw totals ensemble {res.raw_ensemble:.2f} s, independent "
              f"{res.raw_independent:.2f} s")
        for row in res.level_rows:
            print("  " + ", ".join(f"{k}={v}" for k, v in
                                   zip(experiments.LEVEL_COLUMNS, row)
                                   if k in ("pipeline", "l", "J_l", "groups", "iterations")))
        return 0
    res = experiments.run_custom(cfg, out_dir=cfg.output)
    for est in res.estimates:
        print(f"replica {est.replica}: |psi|_L2 = "
              f"{float(experiments.fem.norm_error_L2(est.field)):.6e}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config)
        cfg = cfg.with_overrides(L=args.levels, replicas=args.replicas, seed=args.seed,
                                 jobs=args.jobs, output=args.output)
    except FileNotFoundError as exc:
        _error("config", f"cannot read {exc.filename}")
        return 2
    except config_mod.ConfigError as exc:
        _error("config", exc, field=exc.path)
        return 2
    try:
        return _report(args, cfg)
    except SolverError as exc:
        _error("solver", exc, residual=exc.residual)
        return 3
    except (ValueError, OSError) as exc:
        _error("runtime", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
