"""Service for error norms, residual dual norms and convergence-rate fits."""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import splu

from ucfem.config import RATE_NORMS
from ucfem.exceptions import AnalysisError, SpaceError
from ucfem.fem import forms
from ucfem.fem.mesh import SubdomainIndicator, refine
from ucfem.fem.space import FeFunction, FeSpace, prolongate
from ucfem.models.params import StabilizationParams
from ucfem.models.problem import ExactSolution, LineSource, ProblemSpec
from ucfem.schemas.records import ErrorRecord, RateReport, RateRow
from ucfem.services.solver_service import SolveResult
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)


def fit_slope(h: Sequence[float], values: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(values) against log(h); None if any value is not positive."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or not np.all(np.isfinite(values)) or np.any(values <= 0):
        return None
    return float(np.polyfit(np.log(np.asarray(h, dtype=float)), np.log(values), 1)[0])


class AnalysisService:
    """Service class for post-processing discrete solutions."""

    def subdomain_norms(self, u_h: FeFunction, exact: Optional[ExactSolution] = None,
                        indicator: Optional[SubdomainIndicator] = None) -> Tuple[float, float]:
        """
        L^2 and H^1 norms of u_h - exact over a subdomain.

        Args:
            u_h: Discrete function
            exact: Exact solution with gradient (None for zero)
            indicator: Subdomain (None for the whole domain)

        Returns:
            Tuple[float, float]: (L^2 error, H^1 error)
        """
        space = u_h.space
        data = space.element_data(space.error_degree())
        x, y = data.points[..., 0], data.points[..., 1]
        diff = u_h.values_at(data)
        grad = u_h.gradients_at(data)
        if exact is not None:
            diff = diff - exact.value(x, y)
            gx, gy = exact.gradient(x, y)
            grad = grad - np.stack([np.broadcast_to(gx, x.shape), np.broadcast_to(gy, x.shape)], axis=-1)
        weights = data.weights if indicator is None else data.weights * indicator(x, y)
        l2_sq = float(np.sum(weights * diff ** 2))
        semi_sq = float(np.sum(weights * np.sum(grad ** 2, axis=-1)))
        return math.sqrt(l2_sq), math.sqrt(l2_sq + semi_sq)

    def datum_misfit(self, u_h: FeFunction, problem: ProblemSpec) -> float:
        """||u_h - q||_omega (the unperturbed datum)."""
        space = u_h.space
        data = space.element_data(space.error_degree())
        x, y = data.points[..., 0], data.points[..., 1]
        misfit = u_h.values_at(data) - problem.datum(x, y)
        return math.sqrt(float(np.sum(data.weights * problem.omega(x, y) * misfit ** 2)))

    def residual_functional(self, u_h: FeFunction, source, potential=None,
                            refinements: int = 1) -> Tuple[FeSpace, np.ndarray]:
        """
        r(w) = a(u_h, w) - <f, w> on W_h^p of the ``refinements``-times refined mesh.

        Returns:
            Tuple[FeSpace, np.ndarray]: fine constrained space and r on its basis
        """
        if refinements < 1:
            raise AnalysisError(f"Reference mesh needs at least one refinement, got {refinements}")
        fine = u_h
        for _ in range(refinements):
            fine_space = FeSpace(refine(fine.space.mesh), u_h.space.order)
            fine = prolongate(_unconstrained(fine), fine_space)
        W = fine.space.constrained()
        residual = forms.assemble_a(fine.space, W, potential).matrix @ fine.coefficients
        if isinstance(source, LineSource):
            residual = residual - forms.assemble_line_source(W, source.start, source.end, source.density)
        elif source is not None:
            residual = residual - forms.assemble_source(W, source)
        return W, residual

    def dual_residual_norm(self, u_h: FeFunction, source, potential=None, order: int = 1,
                           refinements: int = 1) -> float:
        """
        Discrete dual norm of the PDE residual via an H^1 Riesz solve.

        For order 1 the H^1 norm of the Riesz representative phi is returned,
        which is the dual norm of r over the fine W_h^p. For order 2 the L^2
        norm of the same phi is returned; it scales like the H^-2 norm
        (an iterated-Riesz proxy, not the true H^-2 norm).

        Raises:
            AnalysisError: If the order is not 1 or 2
            SpaceError: If the reference Riesz solve fails
        """
        if order not in (1, 2):
            raise AnalysisError(f"Residual norm order must be 1 or 2, got {order}")
        W, residual = self.residual_functional(u_h, source, potential, refinements)
        if not np.any(residual):
            return 0.0
        gram = W.h1_matrix().tocsc()
        try:
            phi = splu(gram).solve(residual)
        except RuntimeError as e:
            logger.error(f"Reference Riesz solve failed on {W}: {e}", exc_info=True)
            raise SpaceError(f"Reference Riesz solve failed on {W}: {e}") from e
        if order == 1:
            return math.sqrt(max(float(residual @ phi), 0.0))
        return math.sqrt(max(float(phi @ (W.mass_matrix() @ phi)), 0.0))

    def perturbation_delta(self, response: SolveResult,
                           target: Optional[SubdomainIndicator] = None) -> Dict[str, float]:
        """Size of u_h(delta) - u_h(0): L^2 norm on Omega and H^1 norm on B.

        ``response`` is the solve of the perturbation right-hand side alone
        (:meth:`SaddleSystem.perturbation_only`), so the result is exactly
        linear in the perturbation amplitude.
        """
        delta = response.u_h
        l2_omega, _ = self.subdomain_norms(delta)
        _, h1_b = self.subdomain_norms(delta, indicator=target)
        return {"l2_Omega": l2_omega, "h1_B": h1_b}

    def error_record(self, problem: ProblemSpec, params: StabilizationParams, result: SolveResult,
                     level: int, dofs: int, cond: Optional[float] = None,
                     wall_ms: Optional[float] = None, residuals: bool = True) -> ErrorRecord:
        """Collect all norms of one solved level into an :class:`ErrorRecord`."""
        u_h = result.u_h
        exact = problem.exact
        l2_b, h1_b = self.subdomain_norms(u_h, exact, problem.target)
        l2_all, h1_all = self.subdomain_norms(u_h, exact)
        res_hm1 = res_hm2 = 0.0
        if residuals:
            res_hm1 = self.dual_residual_norm(u_h, problem.source, problem.potential, order=1)
            res_hm2 = self.dual_residual_norm(u_h, problem.source, problem.potential, order=2)
        return ErrorRecord(
            problem=problem.name, p=u_h.space.order, alpha=params.alpha, eta=params.eta,
            tau=params.tau, s_reg=params.s_reg, level=level, h=u_h.space.h, dofs=dofs,
            l2_B=l2_b, h1_B=h1_b, l2_omega=self.datum_misfit(u_h, problem),
            l2_Omega=l2_all, h1_Omega=h1_all, res_hm1=res_hm1, res_hm2_proxy=res_hm2,
            prs=result.prs, dus=result.dus, cond=cond, wall_ms=wall_ms,
        )

    def fit_rates(self, records: List[ErrorRecord], s_reg: float) -> RateReport:
        """
        Fit convergence slopes for every norm column.

        kappa is slope / (s - 1) for the H^1(B) error and slope / s for the
        L^2(B) error; other columns carry no kappa.

        Raises:
            AnalysisError: If fewer than 3 records are given or h is not strictly decreasing
        """
        if len(records) < 3:
            raise AnalysisError(f"Rate fits need at least 3 mesh levels, got {len(records)}")
        h = np.array([record.h for record in records])
        if np.any(np.diff(h) >= 0):
            raise AnalysisError(f"Mesh sizes must be strictly decreasing, got {h.tolist()}")

        rows = []
        for norm in RATE_NORMS:
            values = [getattr(record, norm) for record in records]
            slope = fit_slope(h, values)
            last = fit_slope(h[-2:], values[-2:])
            kappa = None
            if slope is not None:
                if norm == "h1_B" and s_reg > 1:
                    kappa = slope / (s_reg - 1)
                elif norm == "l2_B":
                    kappa = slope / s_reg
            rows.append(RateRow(norm=norm, slope_global=slope, slope_last=last, kappa_est=kappa))
        report = RateReport(s_reg=s_reg, levels=len(records), rows=rows)
        logger.info("Fitted rates: " + ", ".join(
            f"{row.norm}={row.slope_global:.3f}" for row in rows if row.slope_global is not None))
        return report


def _unconstrained(f: FeFunction) -> FeFunction:
    """View a function of W_h^p as a function of V_h^p (zero boundary values)."""
    if not f.space.constrained_flag:
        return f
    space = f.space.unconstrained()
    return FeFunction(space, f.full_coefficients())


# Global analysis service instance
analysis_service = AnalysisService()
