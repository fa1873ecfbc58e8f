"""Command-line entry point: ``sarnsaf run | design-bank | synth-system | chi``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import filterbank, scenario
from .harness import ExperimentConfig, load_config, run_experiment

log = logging.getLogger("sarnsaf")


def _cmd_run(args):
    overrides = dict(algo=args.algo, alpha=args.alpha, gamma=args.gamma, runs=args.runs,
                     seed=args.seed, workers=args.workers)
    if args.alpha is not None or args.gamma is not None:
        overrides["noise"] = "stable"
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    curve = run_experiment(cfg)
    if curve.divergences:
        log.warning("%d of %d trials diverged", curve.divergences, cfg.runs)
    if args.out:
        curve.write_csv(args.out)
    else:
        sys.stdout.write(curve.to_csv())
    return 0


def _cmd_design_bank(args):
    proto = filterbank.design_prototype(args.bands, args.length, args.atten)
    bank = filterbank.modulate(proto, args.bands)
    att = filterbank.stopband_attenuation(bank)
    log.info("stopband attenuation per band (dB): %s", np.array2string(att, precision=1))
    filterbank.save_prototype(args.out, proto, args.bands)
    return 0


def _cmd_synth_system(args):
    rng = np.random.default_rng(args.seed)
    system = scenario.synth_system(args.taps, args.kind, args.chi, rng, active_taps=args.active)
    scenario.save_system(args.out, system)
    log.info("chi = %.4f", system.chi)
    return 0


def _cmd_chi(args):
    system = scenario.load_system(args.input)
    print(f"{system.chi:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="sarnsaf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a Monte-Carlo experiment and emit the NMSD curve as CSV")
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--algo")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("design-bank", parents=[common], help="design a cosine-modulated prototype filter")
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--length", type=int, default=33)
    p.add_argument("--atten", type=float, default=60.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_design_bank)

    p = sub.add_parser("synth-system", parents=[common], help="synthesise an unknown system with target sparseness")
    p.add_argument("--taps", type=int, default=512)
    p.add_argument("--kind", choices=["sparse", "dispersive"], default="sparse")
    p.add_argument("--chi", type=float)
    p.add_argument("--active", type=int, default=16, help="active taps of a sparse system")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_system)

    p = sub.add_parser("chi", parents=[common], help="print the sparseness of a system file")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=_cmd_chi)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
