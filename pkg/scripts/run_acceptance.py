"""
Acceptance Study Script
Runs the convergence, Hoelder-exponent, regime and conditioning studies on the
built-in problems and reports pass/fail for each check.

Usage:
    python scripts/run_acceptance.py --out runs/acceptance
    python scripts/run_acceptance.py --only disk-kink
"""
import argparse
import os
import sys
from pathlib import Path
from typing import Callable, List, Tuple

# Add project root directory to Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ucfem.models.experiment import ExperimentConfig
from ucfem.models.params import StabilizationParams
from ucfem.services.analysis_service import fit_slope
from ucfem.services.experiment_service import RunArtifact, experiment_service
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

Check = Tuple[str, str, Callable[[Path], Tuple[bool, str]]]


def _run(out: Path, problem: str, order: int = 1, preset: str = None, **params) -> RunArtifact:
    if preset is not None:
        parameters = StabilizationParams.preset(preset, **params)
    else:
        parameters = StabilizationParams(**params)
    config = ExperimentConfig(problem=problem, order=order, params=parameters, preset=preset,
                              output_dir=str(out))
    return experiment_service.run(config)


def _slope(artifact: RunArtifact, norm: str) -> float:
    if artifact.rates is None:
        raise RuntimeError(f"no rate fit ({len(artifact.records)} successful levels)")
    return artifact.rates.row(norm).slope_global


def check_conv_h1(out: Path) -> Tuple[bool, str]:
    messages, ok = [], True
    for order, bound in ((1, 0.8), (2, 1.4)):
        slope = _slope(_run(out / f"p{order}", "hadamard-conv", order, "H1-optimal"), "h1_B")
        ok &= slope >= bound
        messages.append(f"p={order}: h1_B slope {slope:.3f} (>= {bound})")
    return ok, "; ".join(messages)


def check_nonconv_kappa(out: Path) -> Tuple[bool, str]:
    artifact = _run(out, "hadamard-nonconv", 1, "H1-optimal")
    kappa = artifact.rates.row("h1_B").kappa_est
    return 0.2 <= kappa <= 0.55, f"kappa {kappa:.3f} (in [0.2, 0.55])"


def check_disk_kink(out: Path) -> Tuple[bool, str]:
    artifact = _run(out / "tau2", "disk-kink", 1, "L2-optimal")
    misfit = _slope(artifact, "l2_omega")
    l2_b = [record.l2_B for record in artifact.records]
    decreasing = all(a > b for a, b in zip(l2_b, l2_b[1:]))
    rerun = _run(out / "tau0", "disk-kink", 1, "L2-optimal", tau=0.0)
    dus = [record.dus for record in rerun.records]
    bounded = max(dus) <= 10.0 * dus[0]
    ok = misfit >= 1.1 and decreasing and _slope(artifact, "l2_B") > 0 and bounded
    return ok, (f"l2_omega slope {misfit:.3f} (>= 1.1), l2_B decreasing={decreasing}, "
                f"dus(tau=0) max/first={max(dus) / dus[0]:.2f}")


def check_eta_regimes(out: Path) -> Tuple[bool, str]:
    disk_zero = _run(out / "disk_eta0", "disk-kink", alpha=1.0, eta=0.0, tau="inf")
    disk_inf = _run(out / "disk_etainf", "disk-kink", alpha=1.0, eta="inf", tau=0.0)
    disk_ok = (disk_zero.records[-1].l2_B < disk_inf.records[-1].l2_B
               and disk_zero.records[-1].h1_B < disk_inf.records[-1].h1_B)

    conv_zero = _run(out / "conv_eta0", "hadamard-conv", alpha=0.0, eta=0.0, tau=0.0)
    conv_inf = _run(out / "conv_etainf", "hadamard-conv", alpha=0.0, eta="inf", tau=0.0)
    gaps = [abs(a.h1_B - b.h1_B) / max(a.h1_B, b.h1_B) for a, b in zip(conv_zero.records, conv_inf.records)]
    conv_ok = max(gaps) <= 0.1
    return disk_ok and conv_ok, f"disk eta=0 better={disk_ok}, conv max relative gap {max(gaps):.3f} (<= 0.1)"


def check_conditioning(out: Path) -> Tuple[bool, str]:
    config = ExperimentConfig(problem="hadamard-conv", order=1, n_min=4, levels=4, output_dir=str(out),
                              params=StabilizationParams(alpha=1.0, eta=0.0, tau=2.0, s_reg=2.0))
    study = experiment_service.condition(config)
    if study.slope is None:
        return False, "no condition slope"
    residual = max(max(r.residual_max, r.residual_min) for r in study.reports)
    ok = -5.0 <= study.slope <= -2.0 and residual <= 1e-3
    return ok, f"log K2 slope {study.slope:.3f} (in [-5, -2]), worst eigen-residual {residual:.1e}"


def check_perturbation(out: Path) -> Tuple[bool, str]:
    params = StabilizationParams.preset("L2-optimal")
    config = ExperimentConfig(problem="hadamard-conv", order=1, n_min=8, levels=4, params=params,
                              perturb_q=1e-3, perturb_mode="dominant", seed=1, compute_residuals=False,
                              output_dir=str(out))
    rows = experiment_service.run(config).perturbation_rows
    slope = fit_slope([row["h"] for row in rows], [row["delta_l2_Omega"] for row in rows])
    return slope <= -params.alpha + 0.2, f"perturbation response slope {slope:.3f} (<= {0.2 - params.alpha:.1f})"


def check_residuals(out: Path) -> Tuple[bool, str]:
    artifact = _run(out, "hadamard-conv", 1, "L2-optimal")
    residuals = [record.res_hm1 for record in artifact.records]
    decreasing = all(a > b for a, b in zip(residuals, residuals[1:]))
    return decreasing, "res_hm1 " + ", ".join(f"{r:.3e}" for r in residuals)


CHECKS: List[Check] = [
    ("hadamard-conv", "H1-optimal rates on the convex configuration", check_conv_h1),
    ("hadamard-nonconv", "Hoelder exponent outside the data hull", check_nonconv_kappa),
    ("disk-kink", "L2-optimal misfit rate and bounded dual variable", check_disk_kink),
    ("regimes", "eta = 0 against eta = inf", check_eta_regimes),
    ("conditioning", "condition number growth", check_conditioning),
    ("residuals", "residual dual norms decrease", check_residuals),
    ("perturbation", "worst-case data perturbation is amplified", check_perturbation),
]


def main():
    """Main function"""
    parser = argparse.ArgumentParser(description="Run the acceptance studies")
    parser.add_argument("--out", type=str, default="runs/acceptance", help="Output directory")
    parser.add_argument("--only", type=str, default=None, help="Run a single check by name")
    args = parser.parse_args()

    checks = [check for check in CHECKS if args.only in (None, check[0])]
    if not checks:
        logger.error(f"✗ Unknown check '{args.only}'; expected one of {[c[0] for c in CHECKS]}")
        sys.exit(2)

    logger.info("=" * 60)
    logger.info("Acceptance studies")
    logger.info("=" * 60)

    failed = []
    for name, description, check in checks:
        logger.info(f"{name}: {description}")
        try:
            ok, message = check(Path(args.out) / name)
        except Exception as e:
            logger.error(f"✗ {name} crashed: {e}", exc_info=True)
            failed.append(name)
            continue
        if ok:
            logger.info(f"✓ {name}: {message}")
        else:
            logger.error(f"✗ {name}: {message}")
            failed.append(name)

    logger.info("=" * 60)
    if failed:
        logger.error(f"✗ {len(failed)} of {len(checks)} checks failed: {', '.join(failed)}")
        logger.info("=" * 60)
        sys.exit(1)
    logger.info(f"✓ All {len(checks)} checks passed")
    logger.info("=" * 60)


if __name__ == "__main__":
    main()
