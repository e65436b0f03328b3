"""Command-line entry point: solve, verify, sweep, simulate, oracle.

Exit codes: 0 success or verification pass, 1 verification failure,
2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .core import NumericalError, solve_market
from .limits import (AnalyticParams, analytic_summary, default_schedule, default_trackers,
                     delta_sweep)
from .model import ConfigError, DomainError, MarketConfig
from .policies import PolicyError, TokenPolicy, parse_policy_spec
from .simulate import estimate_values, trade_log_csv
from .tokens import solve_token_market
from .verify import verify_solution, verify_token_solution

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("inforesale")


def config_hash(config: MarketConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def build_manifest(args, config: MarketConfig | None) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("func",) and v is not None}
    out = {"command": args.command, "version": __version__, "parameters": params}
    if config is not None:
        out["config"] = config.to_dict()
        out["config_sha256"] = config_hash(config)
    return out


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    log.info("wrote %s", out / name)


def _write_json(out: Path, name: str, payload: dict, manifest: dict):
    _write(out, name, json.dumps({"manifest": manifest, **payload}, indent=2) + "\n")


def _load(args):
    config = MarketConfig.from_json(args.config)
    policy = parse_policy_spec(config, args.policy)
    return config, policy


def _solve(config, policy):
    if isinstance(policy, TokenPolicy):
        return solve_token_market(config, policy)
    return solve_market(config, policy)


def cmd_solve(args) -> int:
    config, policy = _load(args)
    sol = _solve(config, policy)
    manifest = build_manifest(args, config)
    out = Path(args.out)
    _write_json(out, "solution.json", sol.to_dict(), manifest)
    _write(out, "solution.csv", sol.to_csv())
    _write_json(out, "manifest.json", {}, manifest)
    print(f"solved {policy.describe()}: {len(sol.values)} states -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    config, policy = _load(args)
    eps = args.epsilon
    sol = _solve(config, policy)
    if isinstance(policy, TokenPolicy):
        report = verify_token_solution(sol, eps)
    else:
        report = verify_solution(sol, eps)
    manifest = build_manifest(args, config)
    out = Path(args.out)
    _write_json(out, "report.json", report.to_dict(), manifest)
    _write(out, "report.txt", report.table() + "\n")
    _write_json(out, "manifest.json", {}, manifest)
    failures = report.failures
    print(f"{policy.describe()} at delta={config.discount:.6g}: "
          f"{'PASS' if report.overall else 'FAIL'} "
          f"({len(report.verdicts) - len(failures)}/{len(report.verdicts)} opportunities)")
    for v in failures:
        print(f"  fail {v.label()}: margin {v.margin:.3e}, actual {v.actual}")
    return EXIT_OK if report.overall else EXIT_FAIL


def _parse_deltas(raw: str | None) -> list[float]:
    if not raw:
        return default_schedule()
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --deltas {raw!r}") from exc


def cmd_sweep(args) -> int:
    config, policy = _load(args)
    schedule = _parse_deltas(args.deltas)
    spec = args.policy
    result = delta_sweep(config, lambda cfg: parse_policy_spec(cfg, spec),
                         default_trackers(config, policy), schedule)
    manifest = build_manifest(args, config)
    out = Path(args.out)
    _write(out, "sweep.csv", result.to_csv())
    _write(out, "sweep.dat", result.to_gnuplot())
    _write_json(out, "sweep.json", result.summary(), manifest)
    _write_json(out, "manifest.json", {}, manifest)
    for name, lim in result.limits.items():
        flag = "" if result.converged[name] else "  (not converged)"
        print(f"{name}: limit {lim:.6f}{flag}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config, policy = _load(args)
    sol = _solve(config, policy)
    est, logs = estimate_values(sol, episodes=args.episodes, seed=args.seed,
                                keep_logs=args.log_episodes)
    start = sol.start_state()
    solver = [float(x) for x in (sol.values[start])]
    manifest = build_manifest(args, config)
    out = Path(args.out)
    _write_json(out, "estimates.json", {**est.to_dict(), "solver_values": solver}, manifest)
    _write(out, "trades.csv", trade_log_csv(logs))
    _write_json(out, "manifest.json", {}, manifest)
    for k, (m, se, v) in enumerate(zip(est.mean, est.std_error, solver)):
        print(f"agent {k}: estimate {m:.6f} +/- {se:.6f}, solver {v:.6f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    weight = 0.5
    config = None
    if args.config:
        config = MarketConfig.from_json(args.config)
        weight = config.weight
    try:
        params = AnalyticParams(args.lam, args.rate, weight)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    summary = analytic_summary(params)
    manifest = build_manifest(args, config)
    out = Path(args.out)
    _write_json(out, "oracle.json", summary, manifest)
    _write_json(out, "manifest.json", {}, manifest)
    for k, v in summary.items():
        print(f"{k}: {v:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inforesale",
                                     description="Bargaining over a resellable information good.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy=True):
        p.add_argument("--config", required=policy, help="market config JSON")
        if policy:
            p.add_argument("--policy", default="immediate",
                           help="immediate | first-buyer:<index> | prepay | table:<path>")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="solve prices and values")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check Nash-bargaining consistency")
    common(p)
    p.add_argument("--epsilon", type=float, default=None, help="tolerance (default 1e-9 * value)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="period sweep with extrapolated limits")
    common(p)
    p.add_argument("--deltas", default=None,
                   help="comma-separated decreasing period lengths (default 0.5*2^-k, k=0..14)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of initial-state values")
    common(p)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--log-episodes", type=int, default=100,
                   help="number of episodes whose trades go to trades.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="continuous-time closed forms (one seller, two buyers)")
    common(p, policy=False)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--rate", type=float, default=1.0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PolicyError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
