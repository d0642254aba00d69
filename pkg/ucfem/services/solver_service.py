"""Service for building, solving and conditioning the stabilized saddle-point system."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ucfem.config import settings
from ucfem.exceptions import AssemblyError, ConvergenceError, FactorizationError, ParameterError
from ucfem.fem import forms
from ucfem.fem.mesh import Mesh, SubdomainIndicator
from ucfem.fem.space import FeFunction, FeSpace, l2_project_onto_constrained
from ucfem.models.params import StabilizationParams
from ucfem.models.problem import LineSource, Perturbation, ProblemSpec
from ucfem.schemas.records import ConditionReport
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

Vector = Union[np.ndarray, FeFunction]


@dataclass(frozen=True)
class SaddleSystem:
    """
    K = [[h^(-2 alpha) M_omega + S_h, A^T], [A, -S*_h]] over V_h^p x W_h^p.

    A has rows on the free DOFs of W_h^p and columns on V_h^p, so that
    A[i, j] = a(phi_j, psi_i).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    params: StabilizationParams
    h: float
    V: FeSpace
    W: FeSpace
    blocks: Dict[str, forms.AssembledForm] = field(repr=False)
    base_rhs: Optional[np.ndarray] = field(default=None, repr=False)
    delta_rhs: Optional[np.ndarray] = field(default=None, repr=False)
    f_h: Optional[FeFunction] = field(default=None, repr=False)
    permutation: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def num_primal(self) -> int:
        return self.V.num_free

    def asymmetry(self) -> float:
        scale = abs(self.matrix).max()
        return 0.0 if scale == 0 else float(abs(self.matrix - self.matrix.T).max() / scale)

    def split(self, x: np.ndarray) -> Tuple[FeFunction, FeFunction]:
        """Split a solution vector (in this system's ordering) into (u_h, z_h)."""
        x = self.unpermute(x)
        n = self.num_primal
        return FeFunction(self.V, x[:n]), FeFunction(self.W, x[n:])

    def unpermute(self, x: np.ndarray) -> np.ndarray:
        if self.permutation is None:
            return np.asarray(x)
        original = np.empty_like(x)
        original[self.permutation] = x
        return original

    def unperturbed(self) -> "SaddleSystem":
        """The same matrix with the right-hand side of the unperturbed data."""
        if self.base_rhs is None or self.permutation is not None:
            return self
        return replace(self, rhs=self.base_rhs)

    def perturbation_only(self) -> "SaddleSystem":
        """The same matrix with the right-hand side of (delta q, delta f) alone."""
        if self.delta_rhs is None or self.permutation is not None:
            raise ParameterError("System carries no separate perturbation right-hand side")
        return replace(self, rhs=self.delta_rhs)

    def permuted(self, permutation: np.ndarray) -> "SaddleSystem":
        """Same system with unknowns and equations reordered by ``permutation``."""
        permutation = np.asarray(permutation)
        if np.sort(permutation).tolist() != list(range(self.size)):
            raise ValueError("Not a permutation of the system unknowns")
        base = self.permutation if self.permutation is not None else np.arange(self.size)
        matrix = self.matrix[permutation][:, permutation].tocsr()
        return replace(self, matrix=matrix, rhs=self.rhs[permutation], permutation=base[permutation])


@dataclass(frozen=True)
class SolveResult:
    """Discrete pair (u_h, z_h) with solve and stabilizer diagnostics."""

    u_h: FeFunction
    z_h: FeFunction
    residual: float
    triple_norm: float
    prs: float
    dus: float
    refinement_steps: int = 0


def _noise(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.standard_normal(size)


def _zero_datum(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.zeros(np.broadcast(x, y).shape)


class SolverService:
    """Service class for the stabilized primal-dual system."""

    def perturbations(self, problem: ProblemSpec, params: StabilizationParams, V: FeSpace, W: FeSpace,
                      matrix: Optional[sp.spmatrix] = None) -> Tuple[Optional[object], Optional[FeFunction]]:
        """
        Realize the data perturbations (delta q, delta f) on the given spaces.

        Args:
            matrix: Assembled system matrix, required in ``dominant`` mode

        Returns:
            Tuple: delta q as a point function or a function on V_h^p (None if
            zero) and delta f as a function on W_h^p (None if zero)

        Raises:
            ParameterError: If ``dominant`` mode is requested without a matrix
        """
        pert: Perturbation = problem.perturbation
        dq = df = None
        if pert.mode == "constant":
            if pert.q_amplitude:
                amplitude = pert.q_amplitude
                dq = lambda x, y: np.full(np.broadcast(x, y).shape, amplitude)  # noqa: E731
            if pert.f_amplitude:
                df = FeFunction(W, np.full(W.num_free, pert.f_amplitude))
            return dq, df

        rng = np.random.default_rng(pert.seed)
        q_noise = _noise(rng, V.num_free)
        f_noise = _noise(rng, W.num_free)
        if pert.q_amplitude and pert.mode == "dominant":
            if matrix is None:
                raise ParameterError("The dominant perturbation needs the assembled system matrix")
            dq = self.dominant_data_perturbation(matrix, V, problem.omega, params.alpha,
                                                 pert.q_amplitude, q_noise)
        elif pert.q_amplitude:
            weighted = forms.assemble_data_rhs(V, problem.omega, FeFunction(V, q_noise), 0.0)
            norm = float(np.sqrt(q_noise @ weighted))
            dq = FeFunction(V, q_noise * (pert.q_amplitude / norm))
        if pert.f_amplitude:
            norm = float(np.sqrt(f_noise @ (W.mass_matrix() @ f_noise)))
            df = FeFunction(W, f_noise * (pert.f_amplitude / norm))
        return dq, df

    def dominant_data_perturbation(self, matrix: sp.spmatrix, V: FeSpace, omega: SubdomainIndicator,
                                   alpha: float, amplitude: float, start: np.ndarray,
                                   steps: Optional[int] = None) -> FeFunction:
        """
        Data perturbation on omega with the largest L^2(Omega) effect on u_h.

        T maps nodal values x, on the DOFs whose support meets omega, to the
        primal part of K^{-1} [h^(-2 alpha) M_omega x; 0]. A fixed number of
        power steps for T^T M T x = lambda M_omega x, started from ``start``,
        gives the direction, which is scaled to ||delta q||_omega = amplitude.

        Raises:
            FactorizationError: If the system matrix is singular
        """
        steps = settings.perturbation_power_steps if steps is None else steps
        mass_omega = forms.assemble_data_term(V, omega, _zero_datum, 0.0)[0].matrix.tocsr()
        touched = np.flatnonzero(mass_omega.diagonal() > 0)
        coupling = mass_omega[:, touched].tocsr()
        omega_gram = mass_omega[touched][:, touched].tocsc()
        mass = V.mass_matrix()
        weight = V.h ** (-2.0 * alpha)
        try:
            lu = splu(sp.csc_matrix(matrix))
            gram_lu = splu(omega_gram)
        except RuntimeError as e:
            raise FactorizationError(f"Factorization for the dominant perturbation failed: {e}") from e

        def primal_response(rhs_v: np.ndarray) -> np.ndarray:
            rhs = np.zeros(matrix.shape[0])
            rhs[:V.num_free] = rhs_v
            return lu.solve(rhs)[:V.num_free]

        x = start[touched]
        amplification = 0.0
        for _ in range(steps):
            x = x / np.sqrt(x @ (omega_gram @ x))
            u = primal_response(weight * (coupling @ x))
            amplification = float(np.sqrt(u @ (mass @ u)))
            x = gram_lu.solve(weight * (coupling.T @ primal_response(mass @ u)))
        x = x / np.sqrt(x @ (omega_gram @ x))
        logger.debug(f"Dominant data perturbation on {len(touched)} DOFs: "
                     f"amplification {amplification:.3e} after {steps} steps")

        coefficients = np.zeros(V.num_free)
        coefficients[touched] = amplitude * x
        return FeFunction(V, coefficients)

    def perturbation_rhs(self, problem: ProblemSpec, params: StabilizationParams, V: FeSpace, W: FeSpace,
                         mass_w, matrix: Optional[sp.spmatrix] = None) -> Tuple[np.ndarray, Optional[FeFunction]]:
        """
        Right-hand side contribution of (delta q, delta f) and delta f itself.

        delta q enters the data term, delta f enters both G (through
        f_h + delta f) and the dual equation.
        """
        delta = np.zeros(V.num_free + W.num_free)
        if not problem.perturbation.active:
            return delta, None
        dq, df = self.perturbations(problem, params, V, W, matrix)
        if dq is not None:
            delta[:V.num_free] += forms.assemble_data_rhs(V, problem.omega, dq, params.alpha)
        if df is not None:
            delta[:V.num_free] += forms.assemble_G(V, df, problem.potential)
            delta[V.num_free:] += mass_w @ df.coefficients
        return delta, df

    def source_functional(self, problem: ProblemSpec, W: FeSpace) -> np.ndarray:
        """<f, w> for every basis function of W_h^p."""
        source = problem.source
        if source is None:
            return np.zeros(W.num_free)
        if isinstance(source, LineSource):
            return forms.assemble_line_source(W, source.start, source.end, source.density)
        return forms.assemble_source(W, source)

    def build(self, problem: ProblemSpec, params: StabilizationParams, mesh: Mesh, order: int) -> SaddleSystem:
        """
        Assemble the stabilized system for one mesh.

        Args:
            problem: Problem definition (perturbations folded into the rhs)
            params: Stabilization parameters
            mesh: Triangulation
            order: Polynomial order p

        Returns:
            SaddleSystem: Block matrix and right-hand side

        Raises:
            ParameterError: If the dual block is degenerate
            AssemblyError: If omega contains no quadrature point
        """
        if params.degenerate_dual:
            raise ParameterError(
                f"Degenerate dual block: eta=inf without a dual Tikhonov term ({params.label()})")
        try:
            V = FeSpace(mesh, order)
            W = V.constrained()
            h = mesh.h
            potential = problem.potential

            data, q_rhs = forms.assemble_data_term(V, problem.omega, problem.datum, params.alpha)

            jump_v = forms.assemble_jump(V)
            primal = forms.compose_primal_stabilizer(
                params, jump_v, forms.assemble_residual_term(V, potential),
                forms.assemble_tikhonov_inner(V, params.tikhonov_inner))
            dual = forms.compose_dual_stabilizer(
                params, forms.assemble_jump(W), forms.assemble_boundary_normal(W),
                forms.assemble_residual_term(W, potential),
                forms.assemble_tikhonov_inner(W, params.tikhonov_inner))
            a_form = forms.assemble_a(V, W, potential)

            f_rhs = self.source_functional(problem, W)
            f_h = l2_project_onto_constrained(W, f_rhs)
            mass_w = W.mass_matrix()
            g_rhs = forms.assemble_G(V, f_h, potential)

            top_left = (data.matrix + primal.matrix).tocsr()
            matrix = sp.bmat([[top_left, a_form.matrix.T], [a_form.matrix, -dual.matrix]], format="csr")
            matrix.sum_duplicates()
            base_rhs = np.concatenate([q_rhs + g_rhs, f_rhs])
            delta_rhs, df = self.perturbation_rhs(problem, params, V, W, mass_w, matrix)
            rhs = base_rhs + delta_rhs
            if df is not None:
                f_h = f_h + df
        except (ParameterError, AssemblyError):
            logger.error(f"Failed to build system for '{problem.name}' ({params.label()}, p={order})", exc_info=True)
            raise

        logger.info(
            f"Built system for '{problem.name}': p={order}, h={h:.4g}, "
            f"V={V.num_free}, W={W.num_free}, nnz={matrix.nnz}")
        return SaddleSystem(
            matrix=matrix, rhs=rhs, base_rhs=base_rhs, delta_rhs=delta_rhs, params=params, h=h, V=V, W=W, f_h=f_h,
            blocks={"data": data, "primal": primal, "dual": dual, "a": a_form,
                   "mass_w": forms.AssembledForm(mass_w, "mass", h)},
        )

    def factorize(self, system: SaddleSystem):
        """
        SuperLU factorization of the system matrix.

        Raises:
            FactorizationError: If the matrix is singular
        """
        try:
            return splu(system.matrix.tocsc())
        except RuntimeError as e:
            message = (f"Factorization of the {system.size}x{system.size} system failed "
                       f"({system.params.label()}, h={system.h:.4g}): {e}")
            logger.error(message, exc_info=True)
            raise FactorizationError(message) from e

    def solve(self, system: SaddleSystem, lu=None) -> SolveResult:
        """
        Direct solve with iterative refinement.

        Raises:
            FactorizationError: If the factorization fails
        """
        if lu is None:
            lu = self.factorize(system)
        rhs = system.rhs
        rhs_norm = float(np.linalg.norm(rhs))
        x = lu.solve(rhs)
        steps = 0
        residual = self._relative_residual(system, x, rhs_norm)
        while residual > settings.solve_rtol and steps < settings.max_refinement_steps:
            x = x + lu.solve(rhs - system.matrix @ x)
            steps += 1
            residual = self._relative_residual(system, x, rhs_norm)
        if residual > settings.solve_rtol:
            logger.warning(f"Solve residual {residual:.2e} above {settings.solve_rtol:.0e} "
                           f"after {steps} refinement steps")

        u_h, z_h = system.split(x)
        result = SolveResult(
            u_h=u_h,
            z_h=z_h,
            residual=residual,
            triple_norm=self.triple_norm(system, u_h, z_h),
            prs=forms.jump_seminorm(u_h),
            dus=float(np.sqrt(max(system.blocks["mass_w"](z_h.coefficients, z_h.coefficients), 0.0))),
            refinement_steps=steps,
        )
        logger.info(f"Solved system of size {system.size}: residual={residual:.2e}, "
                    f"prs={result.prs:.3e}, dus={result.dus:.3e}")
        return result

    @staticmethod
    def _relative_residual(system: SaddleSystem, x: np.ndarray, rhs_norm: float) -> float:
        r = float(np.linalg.norm(system.rhs - system.matrix @ x))
        return r / rhs_norm if rhs_norm > 0 else r

    def triple_norm(self, system: SaddleSystem, u: Vector, z: Vector) -> float:
        """|||(u, z)|||^2 = h^(-2 alpha) ||u||_omega^2 + s_h(u, u) + s*_h(z, z)."""
        u = u.coefficients if isinstance(u, FeFunction) else np.asarray(u)
        z = z.coefficients if isinstance(z, FeFunction) else np.asarray(z)
        value = system.blocks["data"](u, u) + system.blocks["primal"](u, u) + system.blocks["dual"](z, z)
        return float(np.sqrt(max(value, 0.0)))

    def bilinear(self, system: SaddleSystem, x: np.ndarray, y: np.ndarray) -> float:
        """Discrete form A[(x_u, x_z), (y_u, y_z)] = y^T K x in the unpermuted ordering."""
        return float(y @ (system.matrix @ x))

    def condition_number(self, system: SaddleSystem, lu=None, seed: int = 0) -> ConditionReport:
        """Extremal singular values of the system matrix (see :func:`estimate_condition`)."""
        if lu is None:
            lu = self.factorize(system)
        report = estimate_condition(system.matrix, lu=lu, seed=seed)
        report = report.model_copy(update={"h": system.h, "dofs": system.size})
        logger.info(f"Condition number {report.condition:.3e} at h={system.h:.4g} "
                    f"({report.iterations_max}/{report.iterations_min} iterations, "
                    f"residuals {report.residual_max:.1e}/{report.residual_min:.1e})")
        return report


def estimate_condition(matrix: sp.spmatrix, lu=None, seed: int = 0,
                       rtol: Optional[float] = None, max_iter: Optional[int] = None) -> ConditionReport:
    """
    Estimate sigma_max by power iteration and sigma_min by inverse iteration.

    Both run on the square of the symmetric matrix, so eigenvalues of either
    sign are handled alike, and inverse iteration reuses the LU factors. An
    iteration stops when the eigen-residual ||K^2 x - rho x|| of its current
    vector falls below ``rtol * rho``, where rho = ||K x||^2 is the Rayleigh
    quotient of K^2.

    Raises:
        ConvergenceError: If an iteration reaches the cap
        FactorizationError: If no factorization is given and LU fails
    """
    rtol = settings.power_iteration_rtol if rtol is None else rtol
    max_iter = settings.power_iteration_max_iter if max_iter is None else max_iter
    matrix = sp.csc_matrix(matrix)
    if lu is None:
        try:
            lu = splu(matrix)
        except RuntimeError as e:
            raise FactorizationError(f"Factorization failed: {e}") from e

    rng = np.random.default_rng(seed)
    start = rng.standard_normal(matrix.shape[0])
    start /= np.linalg.norm(start)

    sigma_max, it_max, res_max = _power_iteration(lambda v: matrix @ v, start, rtol, max_iter, "power")
    inverse, it_min, res_min = _power_iteration(lu.solve, start, rtol, max_iter, "inverse")
    logger.debug(f"Power iteration: {it_max} steps, residual {res_max:.2e}; "
                 f"inverse iteration: {it_min} steps, residual {res_min:.2e}")
    return ConditionReport(sigma_max=sigma_max, sigma_min=1.0 / inverse,
                           iterations_max=it_max, iterations_min=it_min,
                           residual_max=res_max, residual_min=res_min)


def _power_iteration(apply, x: np.ndarray, rtol: float, max_iter: int, label: str) -> Tuple[float, int, float]:
    """Largest |eigenvalue| of a symmetric operator, its step count and final relative residual."""
    residual = float("inf")
    for iteration in range(1, max_iter + 1):
        y = apply(x)
        rho = float(y @ y)
        if rho == 0.0:
            raise ConvergenceError(f"{label} iteration hit the null space", iteration, residual)
        w = apply(y)
        residual = float(np.linalg.norm(w - rho * x)) / rho
        if residual <= rtol:
            return float(np.sqrt(rho)), iteration, residual
        x = w / np.linalg.norm(w)
    logger.error(f"{label} iteration did not converge in {max_iter} steps (residual {residual:.2e})")
    raise ConvergenceError(f"{label} iteration did not converge in {max_iter} steps", max_iter, residual)


# Global solver service instance
solver_service = SolverService()
