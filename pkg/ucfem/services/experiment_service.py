"""Service for running experiments and writing their artifacts."""
import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ucfem.config import ERROR_COLUMNS, RATE_COLUMNS, RATE_NORMS, settings
from ucfem.exceptions import AnalysisError
from ucfem.fem.mesh import Mesh
from ucfem.models.experiment import ExperimentConfig
from ucfem.models.params import StabilizationParams
from ucfem.models.problem import Perturbation, ProblemSpec
from ucfem.schemas.manifest import LevelManifest, RunManifest, utcnow
from ucfem.schemas.records import ConditionReport, ConditionStudy, ErrorRecord, RateReport
from ucfem.services.analysis_service import analysis_service, fit_slope
from ucfem.services.mesh_cache_service import mesh_cache_service
from ucfem.services.problem_service import problem_service
from ucfem.services.solver_service import SolveResult, solver_service
from ucfem.utils.file_utils import atomic_write_text, ensure_directory
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

CONDITION_COLUMNS = ["level", "h", "dofs", "sigma_max", "sigma_min", "cond", "iterations_max", "iterations_min",
                     "residual_max", "residual_min"]
PERTURBATION_COLUMNS = ["level", "h", "delta_l2_Omega", "delta_h1_B"]
SWEEP_KEY_COLUMNS = ["level", "h"]


@dataclass
class RunArtifact:
    """Everything one run produced, before and after it is written."""

    config: ExperimentConfig
    params: StabilizationParams
    directory: Path
    manifest: RunManifest
    records: List[ErrorRecord] = field(default_factory=list)
    results: List[Optional[SolveResult]] = field(default_factory=list)
    conditions: List[ConditionReport] = field(default_factory=list)
    perturbation_rows: List[Dict[str, float]] = field(default_factory=list)
    rates: Optional[RateReport] = None
    condition_slope: Optional[float] = None


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _cell(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def _sweep_table(meshes: Sequence[Mesh], runs: Sequence[tuple]) -> tuple:
    """Join the error records of (label, artifact) pairs on the mesh level: one row per level."""
    header = SWEEP_KEY_COLUMNS + [f"{label}:{norm}" for label, _ in runs for norm in RATE_NORMS]
    by_level = [{record.level: record for record in artifact.records} for _, artifact in runs]
    rows = []
    for level, mesh in enumerate(meshes):
        row = [str(level), _cell(mesh.h)]
        for records in by_level:
            record = records.get(level)
            row.extend(_cell(getattr(record, norm)) if record is not None else "" for norm in RATE_NORMS)
        rows.append(row)
    return header, rows


_ERROR_PLOT = '''"""Log-log error curves of {run}; regenerate with: python {script}"""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
with open(HERE / "errors.csv", newline="") as f:
    rows = list(csv.DictReader(f))

h = [float(row["h"]) for row in rows]
fig, (ax_err, ax_stab) = plt.subplots(1, 2, figsize=(11, 4.5))
for column in ("l2_B", "h1_B", "l2_omega", "l2_Omega", "h1_Omega", "res_hm1", "res_hm2_proxy"):
    ax_err.loglog(h, [float(row[column]) for row in rows], marker="o", label=column)
for column in ("prs", "dus"):
    ax_stab.loglog(h, [float(row[column]) for row in rows], marker="s", label=column)
for ax in (ax_err, ax_stab):
    ax.set_xlabel("h")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
ax_err.set_title("errors and residual norms")
ax_stab.set_title("stabilizer diagnostics")
fig.tight_layout()
fig.savefig(HERE / "errors.png", dpi=150)
'''

_SWEEP_PLOT = '''"""Per-parameter error curves of a sweep; regenerate with: python {script}"""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
with open(HERE / "sweep.csv", newline="") as f:
    rows = list(csv.DictReader(f))
runs = defaultdict(dict)
for name in rows[0] if rows else []:
    if ":" in name:
        label, column = name.split(":", 1)
        runs[label][column] = name
hs = [float(r["h"]) for r in rows]

fig, axes = plt.subplots(2, 2, figsize=(11, 9))
for ax, column in zip(axes.ravel(), ("l2_B", "h1_B", "prs", "dus")):
    for run, columns in sorted(runs.items()):
        points = [(h, float(r[columns[column]])) for h, r in zip(hs, rows) if r[columns[column]]]
        ax.loglog([p[0] for p in points], [p[1] for p in points], marker="o", label=run)
    ax.set_title(column)
    ax.set_xlabel("h")
    ax.grid(True, which="both", alpha=0.3)
axes[0, 0].legend(fontsize="small")
fig.tight_layout()
fig.savefig(HERE / "sweep.png", dpi=150)
'''


class ExperimentService:
    """Service class for experiment runs, sweeps and condition studies."""

    def resolve(self, config: ExperimentConfig):
        """Problem (with perturbations), parameters (with s), n_min and mesh count of a config."""
        problem = problem_service.get(config.problem)
        if config.perturb_q or config.perturb_f:
            problem = problem.with_perturbation(Perturbation(
                q_amplitude=config.perturb_q, f_amplitude=config.perturb_f,
                mode=config.perturb_mode, seed=config.seed))
        params = config.params
        if "s_reg" not in params.model_fields_set:
            params = StabilizationParams(**{**params.model_dump(exclude_unset=True),
                                            "s_reg": problem_service.regularity(problem, config.order)})
        n_min, levels = problem_service.default_levels(problem, config.order)
        return problem, params, config.n_min or n_min, config.levels or levels

    def meshes(self, config: ExperimentConfig) -> List[Mesh]:
        problem, _, n_min, levels = self.resolve(config)
        return mesh_cache_service.sequence(problem.shape, n_min, levels)

    def run(self, config: ExperimentConfig, meshes: Optional[List[Mesh]] = None,
            directory: Optional[Path] = None, write: bool = True) -> RunArtifact:
        """
        Solve every mesh level of a config and collect records.

        A failing level is logged, recorded in the manifest and skipped.

        Args:
            config: Experiment configuration
            meshes: Pre-built mesh sequence (shared by sweeps)
            directory: Output directory (default config.output_dir)
            write: Emit artifacts when done

        Returns:
            RunArtifact: Records, rates and the manifest
        """
        problem, params, n_min, levels = self.resolve(config)
        if meshes is None:
            meshes = mesh_cache_service.sequence(problem.shape, n_min, levels)
        directory = Path(directory or config.output_dir)
        manifest = RunManifest(
            app_name=settings.app_name, app_version=settings.app_version, problem=problem.name,
            seed=config.seed, config={**config.model_dump(mode="json"), "resolved_params": params.model_dump(mode="json"),
                                      "n_min": n_min, "levels": len(meshes)})
        artifact = RunArtifact(config=config, params=params, directory=directory, manifest=manifest)

        logger.info("=" * 60)
        logger.info(f"Run '{problem.name}' p={config.order} {params.label()} on {len(meshes)} levels")
        logger.info("=" * 60)
        for level, mesh in enumerate(meshes):
            artifact.manifest.levels.append(self._run_level(artifact, problem, params, level, mesh))

        artifact.rates = self._rates(artifact)
        if artifact.conditions and len(artifact.conditions) >= 2:
            artifact.condition_slope = fit_slope([r.h for r in artifact.conditions],
                                                 [r.condition for r in artifact.conditions])
        artifact.manifest.finished_at = utcnow()
        if write:
            self.emit(artifact)
        return artifact

    def _run_level(self, artifact: RunArtifact, problem: ProblemSpec, params: StabilizationParams,
                   level: int, mesh: Mesh) -> LevelManifest:
        config = artifact.config
        entry = LevelManifest(level=level, h=mesh.h)
        started = time.perf_counter()
        try:
            system = solver_service.build(problem, params, mesh, config.order)
            entry.dofs = system.size
            lu = solver_service.factorize(system)
            result = solver_service.solve(system, lu)
            entry.solve_residual = result.residual

            cond = None
            if config.compute_condition:
                report = solver_service.condition_number(system, lu, seed=config.seed)
                artifact.conditions.append(report)
                cond = report.condition
            if problem.perturbation.active:
                response = solver_service.solve(system.perturbation_only(), lu)
                delta = analysis_service.perturbation_delta(response, problem.target)
                artifact.perturbation_rows.append({"level": level, "h": mesh.h,
                                                   "delta_l2_Omega": delta["l2_Omega"],
                                                   "delta_h1_B": delta["h1_B"]})
            elapsed = 1000.0 * (time.perf_counter() - started)
            if config.compute_errors:
                artifact.records.append(analysis_service.error_record(
                    problem, params, result, level=level, dofs=system.size, cond=cond,
                    wall_ms=elapsed if settings.record_wall_time else None,
                    residuals=config.compute_residuals))
            artifact.results.append(result)
        except Exception as e:
            logger.error(f"Level {level} (h={mesh.h:.4g}) failed: {e}", exc_info=True)
            entry.status = "error"
            entry.error = str(e)
            entry.error_type = type(e).__name__
            artifact.results.append(None)
        entry.wall_ms = 1000.0 * (time.perf_counter() - started)
        logger.info(f"Level {level} finished in {entry.wall_ms:.0f} ms ({entry.status})")
        return entry

    def _rates(self, artifact: RunArtifact) -> Optional[RateReport]:
        if len(artifact.records) < 3:
            if artifact.records:
                artifact.manifest.notes.append(f"rates skipped: only {len(artifact.records)} levels succeeded")
            return None
        try:
            return analysis_service.fit_rates(artifact.records, artifact.params.s_reg)
        except AnalysisError as e:
            logger.warning(f"Rate fit skipped: {e}")
            artifact.manifest.notes.append(f"rates skipped: {e}")
            return None

    def emit(self, artifact: RunArtifact) -> List[Path]:
        """
        Write CSV files, the plot script and the manifest of a run.

        Raises:
            OutputError: If the directory is not writable
        """
        directory = ensure_directory(artifact.directory)
        written = []
        if artifact.config.compute_errors:
            written.append(atomic_write_text(directory / "errors.csv", _csv_text(
                ERROR_COLUMNS, [record.csv_row() for record in artifact.records])))
            rows = artifact.rates.rows if artifact.rates is not None else []
            written.append(atomic_write_text(directory / "rates.csv", _csv_text(
                RATE_COLUMNS, [row.csv_row() for row in rows])))
            written.append(atomic_write_text(directory / "plot_errors.py", _ERROR_PLOT.format(
                run=artifact.config.problem, script="plot_errors.py")))
        if artifact.config.compute_condition:
            written.append(atomic_write_text(directory / "conditions.csv", _csv_text(
                CONDITION_COLUMNS, [self._condition_row(level, report)
                                    for level, report in enumerate(artifact.conditions)])))
        if artifact.perturbation_rows:
            written.append(atomic_write_text(directory / "perturbation.csv", _csv_text(
                PERTURBATION_COLUMNS, [[_cell(row[c]) for c in PERTURBATION_COLUMNS]
                                       for row in artifact.perturbation_rows])))
        artifact.manifest.files = sorted(path.name for path in written)
        written.append(atomic_write_text(directory / "manifest.json",
                                         artifact.manifest.model_dump_json(indent=2) + "\n"))
        logger.info(f"Wrote {len(written)} files to '{directory}'")
        return written

    @staticmethod
    def _condition_row(level: int, report: ConditionReport) -> List[str]:
        return [str(level), _cell(report.h), _cell(report.dofs), _cell(report.sigma_max),
                _cell(report.sigma_min), _cell(report.condition), str(report.iterations_max),
                str(report.iterations_min), _cell(report.residual_max), _cell(report.residual_min)]

    def sweep(self, config: ExperimentConfig, alphas: Sequence[float], etas: Sequence[float],
              taus: Sequence[float]) -> List[RunArtifact]:
        """
        One run per (alpha, eta, tau) on shared meshes, plus sweep.csv and a plot script.

        Raises:
            ValueError: If the grid is empty
        """
        configs = config.grid(list(alphas), list(etas), list(taus))
        if not configs:
            raise ValueError("Parameter grid is empty")
        meshes = self.meshes(config)
        root = Path(config.output_dir)
        artifacts = []
        runs = []
        for run_config in configs:
            label = run_config.params.label()
            artifact = self.run(run_config, meshes=meshes, directory=root / label)
            artifacts.append(artifact)
            runs.append((label, artifact))
        ensure_directory(root)
        atomic_write_text(root / "sweep.csv", _csv_text(*_sweep_table(meshes, runs)))
        atomic_write_text(root / "plot_sweep.py", _SWEEP_PLOT.format(script="plot_sweep.py"))
        logger.info(f"Sweep of {len(configs)} grid points written to '{root}'")
        return artifacts

    def condition(self, config: ExperimentConfig) -> ConditionStudy:
        """Condition numbers on every level and the fitted slope of log K2 against log h."""
        run_config = config.model_copy(update={"compute_condition": True, "compute_residuals": False})
        artifact = self.run(run_config)
        study = ConditionStudy(problem=config.problem, p=config.order,
                               reports=artifact.conditions, slope=artifact.condition_slope)
        if study.slope is not None:
            logger.info(f"Condition number slope vs h: {study.slope:.3f}")
        return study


# Global experiment service instance
experiment_service = ExperimentService()
