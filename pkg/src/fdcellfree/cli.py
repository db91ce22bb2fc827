"""Command-line entry point: ``fdcellfree <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, SystemConfig, load_config
from .harness import ExperimentSpec, run_experiment

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

_EXPERIMENTS = {"se-vs-power": "se_vs_power", "wsee-vs-power": "wsee_vs_power", "wsee-vs-bits": "wsee_vs_bits"}


def _number(s: str):
    f = float(s)
    return int(f) if f.is_integer() and "." not in s and "e" not in s.lower() else f


def _parse_set(items):
    """``key=value`` overrides, values parsed as bool/int/float where possible."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        low = v.strip().lower()
        if low in ("true", "false"):
            out[k.strip()] = low == "true"
            continue
        try:
            out[k.strip()] = _number(v.strip())
        except ValueError:
            out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdcellfree", description="Full-duplex cell-free massive MIMO experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file (missing keys take defaults)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--drops", type=int, help="number of random drops")
        p.add_argument("--out", help="CSV output path (stdout if omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override, e.g. geometry.M=32 or unity_fading=true; repeatable")

    for name, kind in _EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run the {kind} sweep")
        common(p)
        p.add_argument("--sweep", type=_number, nargs="+", help="sweep values (dBm, or bits for wsee-vs-bits)")
        p.add_argument("--allocators", nargs="+", help="allocators among OPA EPA1 EPA2 RPA")
        p.add_argument("--cases", nargs="+",
                       help="perfect/limited for se-vs-power, fronthaul capacities in bits/s for wsee-vs-bits")
        p.add_argument("--workers", type=int, default=1, help="parallel drop workers")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials per drop (se-vs-power)")

    p = sub.add_parser("validate-moments", help="closed-form vs Monte-Carlo moment checks")
    common(p)
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--z-max", type=float, default=3.0)

    p = sub.add_parser("selftest-solver", help="randomized convex solver self-test")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    return ap


def _load(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    changes = _parse_set(args.set)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.drops is not None:
        changes["drops"] = args.drops
    if getattr(args, "trials", None) is not None and args.command in _EXPERIMENTS:
        changes["mc_trials"] = args.trials
    for key in changes:
        obj, name = cfg, key
        if "." in key:
            sec, name = key.split(".", 1)
            obj = getattr(cfg, sec, None)
        if obj is None or not hasattr(obj, name):
            raise ConfigError(f"unknown config key {key!r}")
    return cfg.replace(**changes).validate()


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_experiment(args, cfg) -> int:
    kind = _EXPERIMENTS[args.command]
    cases = args.cases or ()
    if kind == "wsee_vs_bits":
        cases = tuple(float(c) for c in cases)
    spec = ExperimentSpec(kind, sweep=args.sweep or (), allocators=args.allocators or (),
                          cases=cases, out=args.out, workers=args.workers)
    table = run_experiment(spec, cfg)
    if not args.out:
        sys.stdout.write(table.to_csv())
    bad = [(n, d) for n, ok, d in table.checks if not ok]
    for n, ok, d in table.checks:
        print(f"{'ok  ' if ok else 'FAIL'} {n} ({d})", file=sys.stderr)
    return EXIT_INVARIANT if bad else EXIT_OK


def _run_moments(args, cfg) -> int:
    from .selftest import moment_validation
    recs = moment_validation(args.cases, args.trials, cfg.seed, args.z_max)
    lines = ["case,side,term,ue,closed_form,mc_estimate,stderr,zscore,ok"]
    for case, _, r, ok in recs:
        lines.append(f"{case},{r.side},{r.term},{r.ue},{r.closed_form!r},{r.mc_estimate!r},"
                     f"{r.stderr!r},{r.zscore!r},{int(ok)}")
    _emit("\n".join(lines) + "\n", args.out)
    n_bad = sum(1 for *_, ok in recs if not ok)
    print(f"{len(recs)} moment checks, {n_bad} beyond {args.z_max} stderr", file=sys.stderr)
    return EXIT_INVARIANT if n_bad else EXIT_OK


def _run_solver(args, cfg) -> int:
    from .selftest import solver_selftest
    recs = solver_selftest(args.count, cfg.seed, args.tol)
    lines = ["index,n,affine_only,status,kkt,objective,reference,ok"]
    for r in recs:
        lines.append(f"{r.index},{r.n},{int(r.affine_only)},{r.status},{r.kkt!r},{r.objective!r},"
                     f"{r.reference!r},{int(r.ok)}")
    _emit("\n".join(lines) + "\n", args.out)
    n_bad = sum(1 for r in recs if not r.ok)
    print(f"{len(recs)} programs, {n_bad} failed", file=sys.stderr)
    return EXIT_INVARIANT if n_bad else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command in _EXPERIMENTS:
        return _run_experiment(args, cfg)
    if args.command == "validate-moments":
        return _run_moments(args, cfg)
    return _run_solver(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
