"""Command-line entry point: ``superrad --experiment fig4 --out results``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import SuperradError
from .experiments import EXPERIMENTS, default_config, load_config_file, run_experiment

OUTPUT_ROOT_ENV = "SUPERRAD_OUTPUT_ROOT"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="superrad", description="Regenerate superradiance figure data.")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="experiment bundle to run")
    p.add_argument("--params", help="JSON parameter or config file")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<experiment> or results/<experiment>)")
    p.add_argument("--threads", type=int, default=1, help="maximum worker processes")
    p.add_argument("--no-plots", action="store_true", help="skip SVG rendering")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.params:
            cfg = load_config_file(args.params, args.experiment)
        elif args.experiment:
            cfg = default_config(args.experiment)
        else:
            print("superrad: error: give --experiment or --params", file=sys.stderr)
            return 2
        if args.threads < 1:
            print("superrad: error: --threads must be >= 1", file=sys.stderr)
            return 2
        if args.seed is not None:
            if args.seed < 0:
                print("superrad: error: --seed must be non-negative", file=sys.stderr)
                return 2
            cfg.master_seed = args.seed
        root = os.environ.get(OUTPUT_ROOT_ENV, "results")
        cfg.out_dir = args.out or os.path.join(root, cfg.experiment)
        cfg.threads = args.threads
        cfg.plots = not args.no_plots
        manifest = run_experiment(cfg)
        if cfg.plots:
            from .plots import emit_plots

            emit_plots(manifest, cfg.out_dir)
    except SuperradError as exc:
        print(f"superrad: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {cfg.out_dir}/manifest.json ({manifest['status']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
