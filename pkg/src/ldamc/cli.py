"""Command line entry point: ``ldamc {sweep,classify,oracle,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import _backend
from .channel_sim import ReceivedBlock
from .constellations import build_set
from .gibbs_core import ChainConfig, Priors, classify, run_chain
from .harness import (
    ConfigError,
    ExperimentConfig,
    compare_with_oracle,
    dump_config,
    load_config,
    oracle_instance,
    preset_path,
    read_iq,
    run_sweep,
    write_results,
)
from .rand_dists import rng_stream


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument("--workers", type=int, default=default, help="worker processes")
    parser.add_argument("--out", default=default, help="output file (CSV for sweep)")


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_sweep(args) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    if args.preset:
        cfg = load_config(preset_path(args.preset), overrides)
    elif args.config:
        cfg = load_config(args.config, overrides)
    else:
        raise ConfigError("sweep needs a config file or --preset")
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return 0

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    t0 = time.perf_counter()
    table = run_sweep(cfg, progress=progress)
    if args.verbose:
        print(file=sys.stderr)
    out = args.out or "results.csv"
    write_results(table, out, timing=not args.no_timing)
    for row in table.rows:
        lo, hi = row.interval
        print(f"snr {row.snr_db:>5g} dB  {row.mode:<19} gamma {row.gamma:<5g} "
              f"PCC {row.pcc:.3f}  [{lo:.3f}, {hi:.3f}]  n={row.n_trials}")
    status = " (partial, interrupted)" if table.partial else ""
    print(f"wrote {out}{status} in {time.perf_counter() - t0:.1f}s [{_backend.BACKEND} kernel]")
    return 130 if table.partial else 0


def cmd_classify(args) -> int:
    r = read_iq(args.iqfile)
    cset = build_set(args.constellations.split(","))
    if args.mode == "superconstellation":
        priors = Priors(np.zeros(len(cset)), args.alpha_h, args.alpha0, args.beta0)
    else:
        priors = Priors(np.full(len(cset), args.gamma), args.alpha_h, args.alpha0, args.beta0)
    obs = ReceivedBlock(r, args.taps)
    if obs.N < obs.L:
        raise ConfigError(f"block of {obs.N} samples is shorter than L={obs.L}")
    rng = rng_stream(args.seed if args.seed is not None else 0)
    result = run_chain(obs, cset, priors, ChainConfig(args.samples, args.burn_in, args.mode), rng)
    est, score = classify(result, cset)
    lines = [f"{cid} {s:.6f}" for cid, s in zip(cset.ids, score)]
    lines.append(f"estimate {est}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_oracle(args) -> int:
    seed = args.seed if args.seed is not None else 0
    passed = 0
    for i in range(args.instances):
        inst = oracle_instance(seed, i, N=args.block_length, L=args.taps)
        exact, chain = compare_with_oracle(inst, args.samples, args.burn_in, seed)
        err = float(np.max(np.abs(exact - chain)))
        ok = err <= args.tol
        passed += ok
        print(f"instance {i}: true {inst.true_id:<5} oracle {np.round(exact, 4)} "
              f"chain {np.round(chain, 4)} max|diff| {err:.4f} {'ok' if ok else 'MISS'}")
    print(f"{passed}/{args.instances} within {args.tol}")
    return 0 if passed >= args.min_pass else 1


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    print(f"kernel backend: {_backend.BACKEND}")
    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldamc",
        description="Modulation classification by Gibbs sampling on a latent Dirichlet mixture.",
    )
    _global_options(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a Monte Carlo PCC sweep")
    _global_options(p, suppress=True)
    p.add_argument("config", nargs="?", help="config file")
    p.add_argument("--preset", help="shipped preset (fig3, fig4)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--no-timing", action="store_true", help="leave the timing column empty")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p.set_defaults(func=cmd_sweep)

    defaults = ExperimentConfig()
    p = sub.add_parser("classify", help="classify one block from an IQ text file")
    _global_options(p, suppress=True)
    p.add_argument("iqfile", help="whitespace-separated 'index re im' lines")
    p.add_argument("--taps", type=int, required=True, help="channel length L")
    p.add_argument("--constellations", default=",".join(defaults.constellations))
    p.add_argument("--mode", default="latent_dirichlet",
                   choices=["latent_dirichlet", "superconstellation"])
    p.add_argument("--gamma", type=float, default=15.0)
    p.add_argument("--samples", type=int, default=defaults.samples)
    p.add_argument("--burn-in", type=int, default=defaults.burn_in)
    p.add_argument("--alpha-h", type=float, default=defaults.alpha_h)
    p.add_argument("--alpha0", type=float, default=defaults.alpha0)
    p.add_argument("--beta0", type=float, default=defaults.beta0)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("oracle", help="compare the sampler with exact enumeration on tiny blocks")
    _global_options(p, suppress=True)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--block-length", type=int, default=4)
    p.add_argument("--taps", type=int, default=1)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--min-pass", type=int, default=9)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("selftest", help="run the invariant suite")
    _global_options(p, suppress=True)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"ldamc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
