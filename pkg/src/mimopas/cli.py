"""Command-line front end: `mimopas simulate` and `mimopas plot`."""

import argparse
import dataclasses
import sys

from .sim import ConfigError, load_config, run_sweep

EXIT_CONFIG = 2


def _build_parser():
    parser = argparse.ArgumentParser(prog="mimopas",
                                     description="shaped-MIMO link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an SNR sweep from a config file")
    sim.add_argument("--config", required=True, help="flat key = value config file")
    sim.add_argument("--snr-start", type=float, default=None)
    sim.add_argument("--snr-stop", type=float, default=None)
    sim.add_argument("--snr-step", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--detector", choices=("sd", "mmse", "bruteforce"), default=None)
    sim.add_argument("--scenario", choices=("uniform", "ps", "mixed"), default=None)
    sim.add_argument("--output", default=None, help="CSV path (default sweep.csv)")
    sim.add_argument("--workers", type=int, default=None)
    sim.add_argument("--figures", action="store_true", default=None,
                     help="render PNG figures next to the CSV")

    plot = sub.add_parser("plot", help="render figures from a sweep CSV")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--outdir", default=None)
    return parser


def _simulate(args):
    overrides = {
        "snr_start": args.snr_start,
        "snr_stop": args.snr_stop,
        "snr_step": args.snr_step,
        "seed": args.seed,
        "detector": args.detector,
        "scenario": args.scenario,
        "output": args.output,
        "workers": args.workers,
        "figures": args.figures,
    }
    cfg = load_config(args.config, overrides)
    if not cfg.output:
        cfg = dataclasses.replace(cfg, output="sweep.csv")
    run_sweep(cfg)
    print(f"wrote {cfg.output}", file=sys.stderr)
    return 0


def _plot(args):
    from .plots import render_report
    try:
        written = render_report(args.csv, args.outdir)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot render {args.csv}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _simulate(args)
        return _plot(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
