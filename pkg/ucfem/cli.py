"""
Command-line interface.

Usage:
    python -m ucfem run --problem hadamard-conv --preset H1-optimal --order 1 --out runs/conv
    python -m ucfem sweep --problem disk-kink --alpha 1 --eta 0 --taus 0,0.5,2,10 --out runs/tau
    python -m ucfem condition --problem hadamard-conv --alpha 1 --eta 0 --tau 2 --s-reg 2
    python -m ucfem list-problems
"""
import argparse
import math
import sys
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from ucfem.config import PRESETS, settings
from ucfem.exceptions import UcfemError
from ucfem.models.experiment import ExperimentConfig
from ucfem.services.experiment_service import experiment_service
from ucfem.services.problem_service import problem_service
from ucfem.utils.file_utils import load_flat_config
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def parse_exponent(text: str) -> float:
    """A non-negative number or 'inf'."""
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"exponent must be a number or 'inf', got '{text}'")


def parse_list(convert):
    def parse(text: str) -> List[float]:
        try:
            return [convert(item) for item in text.split(",") if item.strip()]
        except (ValueError, argparse.ArgumentTypeError):
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got '{text}'")
    return parse


def _add_common(parser: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values survive unless a flag is given
    parser.add_argument("--config", type=str, help="Flat key: value config file mirroring the flags")
    parser.add_argument("--problem", type=str, help="Built-in problem name")
    parser.add_argument("--preset", type=str, choices=sorted(PRESETS), help="Named parameter row")
    parser.add_argument("--alpha", type=float, help="Data-fidelity exponent")
    parser.add_argument("--eta", type=parse_exponent, help="Dual stabilizer exponent (number or inf)")
    parser.add_argument("--tau", type=parse_exponent, help="Dual Tikhonov exponent (number or inf)")
    parser.add_argument("--s-reg", dest="s_reg", type=float, help="Regularity index s")
    parser.add_argument("--order", type=int, help="Polynomial order p")
    parser.add_argument("--levels", type=int, help="Number of meshes")
    parser.add_argument("--n-min", dest="n_min", type=int, help="Subdivision count of the coarsest mesh")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--out", type=str, help="Output directory")
    parser.add_argument("--perturb-q", dest="perturb_q", type=float, help="Amplitude of delta q")
    parser.add_argument("--perturb-f", dest="perturb_f", type=float, help="Amplitude of delta f")
    parser.add_argument("--perturb-mode", dest="perturb_mode", choices=["noise", "constant", "dominant"],
                        help="Perturbation realization")
    parser.add_argument("--tikhonov-off", dest="tikhonov_off", action="store_const", const=True,
                        help="Zero both Tikhonov terms")
    parser.add_argument("--condition", dest="compute_condition", action="store_const", const=True,
                        help="Also estimate condition numbers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ucfem", description=f"{settings.app_name} {settings.app_version}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Solve one configuration on a mesh sequence")
    _add_common(run)

    sweep = commands.add_parser("sweep", help="Run a grid over alpha, eta and tau")
    _add_common(sweep)
    sweep.add_argument("--alphas", type=parse_list(float), help="Comma-separated alpha values")
    sweep.add_argument("--etas", type=parse_list(parse_exponent), help="Comma-separated eta values")
    sweep.add_argument("--taus", type=parse_list(parse_exponent), help="Comma-separated tau values")

    condition = commands.add_parser("condition", help="Condition numbers and their h-slope")
    _add_common(condition)

    commands.add_parser("list-problems", help="List built-in problems")
    return parser


def collect_options(args: argparse.Namespace) -> Dict[str, Any]:
    """Merge the config file (if any) with the flags; flags win."""
    options: Dict[str, Any] = {}
    if getattr(args, "config", None):
        options.update(load_flat_config(args.config))
    skip = {"command", "config", "alphas", "etas", "taus"}
    options.update({k: v for k, v in vars(args).items() if k not in skip and v is not None})
    if "problem" not in options:
        raise ValueError("--problem is required (flag or config file)")
    return options


def _grid(values: Optional[List[float]], default: float) -> List[float]:
    return values if values else [default]


def _print_rates(artifact) -> None:
    if artifact.rates is None:
        print("rates: not enough successful levels")
        return
    for row in artifact.rates.rows:
        slope = "" if row.slope_global is None else f"{row.slope_global:8.3f}"
        kappa = "" if row.kappa_est is None else f"  kappa={row.kappa_est:.3f}"
        print(f"{row.norm:>14s} {slope}{kappa}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "list-problems":
        for name, description in problem_service.list():
            print(f"{name:18s} {description}")
        return EXIT_OK

    try:
        options = collect_options(args)
        config = ExperimentConfig.from_options(options)
    except (ValidationError, ValueError, KeyError, OSError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "run":
            artifact = experiment_service.run(config)
            _print_rates(artifact)
            return EXIT_FAILURE if artifact.manifest.failed_levels else EXIT_OK
        if args.command == "sweep":
            params = config.params
            artifacts = experiment_service.sweep(
                config, _grid(args.alphas, params.alpha), _grid(args.etas, params.eta), _grid(args.taus, params.tau))
            failed = any(artifact.manifest.failed_levels for artifact in artifacts)
            return EXIT_FAILURE if failed else EXIT_OK
        if args.command == "condition":
            study = experiment_service.condition(config)
            for report in study.reports:
                print(f"h={report.h:.5f} dofs={report.dofs} cond={report.condition:.4e}")
            if study.slope is not None:
                print(f"slope(log K2 vs log h) = {study.slope:.3f}")
            return EXIT_OK
    except ValidationError as e:
        print(f"error: invalid parameters: {e}", file=sys.stderr)
        return EXIT_USAGE
    except UcfemError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
