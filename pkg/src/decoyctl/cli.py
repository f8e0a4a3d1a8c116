"""Command-line interface.

Subcommands: run (one experiment), montecarlo (detection statistics), bench
(loop timing), keygen (key files), decoys (pool files).  Exit codes: 0
success — including runs that end in a detected attack, which is the scheme
working — 1 usage, 2 configuration, 3 transport, 4 internal error.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from . import decoy, harness, paillier, runtime
from .config import (
    ATTACK_KINDS,
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    load_config,
)
from .protocol import ProtocolError, TransportError
from .robot import PIGains

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_INTERNAL = 4

MC_ATTACKER_NAMES = {
    "guess": "guess_and_tamper",
    "constant": "constant_decoy_replay",
    "replay": "replay",
}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_run_parser(sub) -> None:
    p = sub.add_parser("run", help="run one closed-loop experiment")
    p.add_argument("--config", help="JSON config file (flags override its fields)")
    p.add_argument("--out-dir", default="out/run")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-d", type=int, dest="n_d")
    p.add_argument("--pool-size", type=int)
    p.add_argument("--pool-file")
    p.add_argument("--allow-single-decoy", action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument("--key-bits", type=int)
    p.add_argument("--key-file")
    p.add_argument("--delta", type=float)
    p.add_argument("--attack", choices=ATTACK_KINDS)
    p.add_argument("--k-a", type=int, dest="k_a")
    p.add_argument("--tamper-factor", type=int)
    p.add_argument("--waypoints", dest="waypoint_file")
    p.add_argument("--speed", type=float)
    p.add_argument("--endpoint", help="cloud host:port (default: in-process)")
    p.add_argument("--pace", action=argparse.BooleanOptionalAction, default=None,
                   help="pace the loop at t_s wall-clock")
    p.add_argument("--grace-steps", type=int)
    p.set_defaults(func=cmd_run)


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {name: getattr(args, name) for name in (
        "steps", "seed", "n_d", "pool_size", "pool_file", "allow_single_decoy",
        "key_bits", "key_file", "delta", "attack", "k_a", "tamper_factor",
        "waypoint_file", "speed", "endpoint", "pace", "grace_steps")}
    cfg = apply_overrides(cfg, overrides)
    result = runtime.run_experiment(cfg)
    out = _out_dir(args)
    runtime.write_trajectory_csv(out / "trajectory.csv", result.trajectory)
    runtime.write_events_csv(out / "events.csv", result.events)
    runtime.write_timings_csv(out / "timing.csv", result.timings)
    summary = result.summary()
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    print(f"logs written to {out}")
    return EXIT_OK


def _add_montecarlo_parser(sub) -> None:
    p = sub.add_parser("montecarlo", help="Monte Carlo detection statistics")
    p.add_argument("--attacker", choices=sorted(MC_ATTACKER_NAMES), default="guess")
    p.add_argument("--n-d", type=_int_list, dest="n_d_values", default=[1],
                   help="comma-separated decoy counts, e.g. 1,2,4")
    p.add_argument("--pool-size", type=int, default=2)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--k-a", type=int, dest="k_a", default=200,
                   help="activation step (replay attacker only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--key-bits", type=int, default=64,
                   help="prime size; statistics do not depend on it")
    p.add_argument("--out-dir", default="out/montecarlo")
    p.set_defaults(func=cmd_montecarlo)


def cmd_montecarlo(args) -> int:
    if args.runs < 100:
        raise ConfigError(["runs must be at least 100 for meaningful statistics"])
    out = _out_dir(args)
    attacker = MC_ATTACKER_NAMES[args.attacker]
    if attacker == "replay":
        stats = harness.montecarlo_replay(runs=args.runs, k_a=args.k_a,
                                          horizon=args.horizon, seed=args.seed,
                                          key_bits=args.key_bits)
        harness.write_replay_csv(out / "replay.csv", stats)
        text = harness.format_replay(stats)
    else:
        batches = harness.montecarlo_survival(
            attacker, args.n_d_values, runs=args.runs, horizon=args.horizon,
            seed=args.seed, key_bits=args.key_bits, pool_size=args.pool_size)
        harness.write_survival_csv(out / "survival.csv", batches)
        text = harness.format_survival(batches)
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    print(f"statistics written to {out}")
    return EXIT_OK


def _add_bench_parser(sub) -> None:
    p = sub.add_parser("bench", help="time the loop phases on loopback transport")
    p.add_argument("--key-bits", type=int, default=512)
    p.add_argument("--n-d", type=int, dest="n_d", default=1)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out/bench")
    p.set_defaults(func=cmd_bench)


def cmd_bench(args) -> int:
    try:
        report = harness.bench(key_bits=args.key_bits, n_d=args.n_d,
                               iterations=args.iterations, seed=args.seed)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    out = _out_dir(args)
    harness.write_bench_csv(out / "bench.csv", report)
    text = report.table()
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    print(f"timings written to {out}")
    return EXIT_OK


def _add_keygen_parser(sub) -> None:
    p = sub.add_parser("keygen", help="generate a key pair file")
    p.add_argument("--key-bits", type=int, default=512)
    p.add_argument("--seed", type=int, default=None,
                   help="deterministic keys (default: system randomness)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)


def cmd_keygen(args) -> int:
    rng = random.Random(f"{args.seed}/key") if args.seed is not None else None
    try:
        pk, sk = paillier.keygen(args.key_bits, rng)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    paillier.save_keypair(args.out, pk, sk)
    print(f"{args.key_bits}-bit primes written to {args.out} (n has "
          f"{pk.n.bit_length()} bits)")
    return EXIT_OK


def _add_decoys_parser(sub) -> None:
    p = sub.add_parser("decoys", help="generate or validate decoy pool files")
    action = p.add_subparsers(dest="action", required=True, parser_class=_Parser)

    gen = action.add_parser("generate", help="write a compliant pool file")
    gen.add_argument("--count", type=int, default=2)
    gen.add_argument("--builtin", action="store_true",
                     help="write the stock two-entry pool instead of a random one")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--delta", type=float, default=None)
    gen.add_argument("--allow-single-decoy", action="store_true")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_decoys_generate)

    val = action.add_parser("validate", help="check every tuple in a pool file")
    val.add_argument("pool_file")
    val.add_argument("--delta", type=float, default=None)
    val.add_argument("--allow-single-decoy", action="store_true")
    val.set_defaults(func=cmd_decoys_validate)


def cmd_decoys_generate(args) -> int:
    delta = args.delta if args.delta is not None else ExperimentConfig().delta
    gains = PIGains()
    try:
        if args.builtin:
            pool = decoy.builtin_pool(gains, delta)
        else:
            pool = decoy.build_decoy_pool(args.count, gains,
                                          random.Random(f"{args.seed}/pool"),
                                          delta=delta,
                                          allow_single=args.allow_single_decoy)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    decoy.save_pool(args.out, pool)
    print(f"{len(pool)} decoy tuples written to {args.out}")
    return EXIT_OK


def cmd_decoys_validate(args) -> int:
    delta = args.delta if args.delta is not None else ExperimentConfig().delta
    try:
        pool = decoy.load_pool(args.pool_file, PIGains(), delta,
                               allow_single=args.allow_single_decoy)
    except (OSError, ValueError) as exc:
        raise ConfigError([f"pool file {args.pool_file}: {exc}"]) from exc
    print(f"{args.pool_file}: {len(pool)} tuples, all compliant")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="decoyctl",
                     description="Verified encrypted control experiments: a "
                                 "Paillier PI controller in the cloud, checked "
                                 "step-by-step against plant-side decoys.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_run_parser(sub)
    _add_montecarlo_parser(sub)
    _add_bench_parser(sub)
    _add_keygen_parser(sub)
    _add_decoys_parser(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"decoyctl: config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (TransportError, ProtocolError) as exc:
        print(f"decoyctl: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except Exception as exc:  # internal fault: report, never swallow silently
        print(f"decoyctl: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
