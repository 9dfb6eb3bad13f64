#!/usr/bin/env python3
"""
Early-stopped gradient descent on linear models: experiments and checks.

Subcommands:
  path-experiment   distance of the gradient path to w* over the iterations
  grid-experiment   excess risk of the averaged iterate over a (γ, T) grid
  bounds            measured excess risk and gradient noise against the bounds
  rademacher        empirical Rademacher complexities and their bounds
  verify            property suite; nonzero exit status on any failure
"""

import argparse
import logging
import sys
import os
sys.path.insert(0, os.path.dirname(__file__))

from src import __version__
from src.colors import Colors, error
from src.engine import DivergenceError
from src.experiments import EXPERIMENTS, ConfigError, RunManifest, config_from_dict, resolve_config

C = Colors

EXIT_FAILED = 1
EXIT_CONFIG = 2

COMMAND_HELP = {
    'path-experiment': 'distance of the gradient path to w* over the iterations',
    'grid-experiment': 'excess risk of the averaged iterate over a (γ, T) grid',
    'bounds': 'measured excess risk and gradient noise against the bounds',
    'rademacher': 'empirical Rademacher complexities (--n-train sets their sample size)',
    'verify': 'property suite; exit status 1 on any failure',
}


def print_header(command: str, output_dir: str):
    print(f"\n{C.BOLD_CYAN}{'═' * 70}{C.RESET}")
    print(f"{C.BOLD_WHITE}{'GRADIENT DESCENT: IMPLICIT REGULARIZATION'.center(70)}{C.RESET}")
    print(f"{C.DIM}{f'{command}  ·  v{__version__}  ·  output: {output_dir}'.center(70)}{C.RESET}")
    print(f"{C.BOLD_CYAN}{'═' * 70}{C.RESET}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='FILE', help='TOML config file')
    common.add_argument('--manifest', metavar='FILE',
                        help='re-run from a manifest.json written by an earlier run')
    common.add_argument('--full-scale', action='store_true',
                        help='full-size experiment (n_train=10^4, 100 repetitions, every T)')
    common.add_argument('--output-dir', '-o', metavar='DIR',
                        help='output directory (default: $GDREG_OUTPUT_DIR or results/)')
    common.add_argument('--jobs', '-j', type=int, help='worker processes (default: 1)')
    common.add_argument('--seed', type=int, help='root seed')
    common.add_argument('--repetitions', '-r', type=int, help='repetitions per cell')
    common.add_argument('--n-train', type=int, help='training sample size')
    common.add_argument('--d', type=int, help='dimension of the synthetic model')
    common.add_argument('--loss', choices=['squared', 'logistic_regression',
                                           'logistic_classification', 'exponential'])
    common.add_argument('--gamma', type=float, nargs='+', dest='gammas', metavar='G',
                        help='step size(s)')
    common.add_argument('--T', type=int, nargs='+', dest='Ts', metavar='T', help='stopping time(s)')
    common.add_argument('--delta', type=float, help='confidence parameter')
    common.add_argument('--oracle', choices=['auto', 'analytic_squared', 'monte_carlo'])
    common.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='logging level (default: WARNING)')
    common.add_argument('--quiet', '-q', action='store_true',
                        help='no per-stage output, only the result tables')

    parser = argparse.ArgumentParser(
        description='Implicit regularization of early-stopped gradient descent',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python gd_experiments.py path-experiment                  # desk scale, logistic loss, γ=1
  python gd_experiments.py grid-experiment --jobs 4
  python gd_experiments.py grid-experiment --full-scale -o results/full
  python gd_experiments.py bounds --n-train 10000
  python gd_experiments.py rademacher --n-train 10
  python gd_experiments.py verify
  python gd_experiments.py grid-experiment --manifest results/manifest.json -o rerun/
        """
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, text in COMMAND_HELP.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    keys = ('output_dir', 'jobs', 'seed', 'repetitions', 'n_train', 'd', 'loss', 'gammas', 'Ts',
            'delta', 'oracle')
    values = {key: getattr(args, key) for key in keys}
    if args.command == 'rademacher' and values.get('n_train') is not None:
        values['rademacher_n'] = values.pop('n_train')
    return values


def config_for(args: argparse.Namespace):
    if args.manifest:
        manifest = RunManifest.load(args.manifest)
        if manifest.command != args.command:
            raise ConfigError('manifest', f"manifest was written by '{manifest.command}', "
                                          f"not '{args.command}'")
        values = dict(manifest.config)
        # neither changes the results
        for key in ('output_dir', 'jobs'):
            if getattr(args, key) is not None:
                values[key] = getattr(args, key)
        return config_from_dict(values)
    return resolve_config(args.command, args.config, overrides_from(args), args.full_scale)


def main() -> int:
    parser = build_parser()
    args = parser.parse_args()
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        config = config_for(args)
    except (ValueError, OSError) as exc:
        print(error(f"Configuration error: {exc}"), file=sys.stderr)
        return EXIT_CONFIG

    verbose = not args.quiet
    if verbose:
        print_header(args.command, config.output_dir)

    experiment = EXPERIMENTS[args.command](config, verbose=verbose)
    try:
        outcome = experiment.run()
    except KeyboardInterrupt:
        print(f"\n\n{C.BOLD_YELLOW}Interrupted.{C.RESET}")
        return EXIT_FAILED
    except DivergenceError as exc:
        print(error(f"Every repetition diverged: {exc}"), file=sys.stderr)
        return EXIT_FAILED

    experiment.print_results()
    manifest_path = experiment.export()
    print(f"\n  {C.GREEN}✓{C.RESET} Manifest: {C.BOLD_WHITE}{manifest_path}{C.RESET}")

    if args.command == 'verify' and not outcome:
        return EXIT_FAILED
    return 0


if __name__ == "__main__":
    sys.exit(main())
