import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from ucfem.exceptions import ConvergenceError, FactorizationError, ParameterError
from ucfem.fem import forms
from ucfem.fem.mesh import generate, refinement_sequence
from ucfem.fem.space import FeSpace, nodal_interpolate
from ucfem.models.params import StabilizationParams
from ucfem.models.problem import Perturbation
from ucfem.services.analysis_service import analysis_service, fit_slope
from ucfem.services.problem_service import problem_service
from ucfem.services.solver_service import estimate_condition, solver_service


@pytest.fixture(scope="module")
def hadamard():
    return problem_service.get("hadamard-conv")


@pytest.fixture(scope="module")
def harmonic():
    return problem_service.get("smoke-harmonic")


class TestBuild:
    def test_zero_data_gives_zero_solution(self, zero_problem, square_mesh):
        system = solver_service.build(zero_problem, StabilizationParams(), square_mesh, 2)
        result = solver_service.solve(system)

        assert not np.any(system.rhs)
        assert not np.any(result.u_h.coefficients)
        assert not np.any(result.z_h.coefficients)
        assert result.triple_norm == 0.0

    def test_block_sizes(self, hadamard):
        system = solver_service.build(hadamard, StabilizationParams(), generate(hadamard.shape, 4), 2)
        assert system.size == system.V.num_free + system.W.num_free
        assert system.blocks["a"].shape == (system.W.num_free, system.V.num_free)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_symmetric(self, hadamard, order):
        system = solver_service.build(hadamard, StabilizationParams(), generate(hadamard.shape, 4), order)
        assert system.asymmetry() <= 1e-12

    def test_degenerate_dual(self, hadamard):
        params = StabilizationParams(eta=math.inf, tikhonov_off=True)
        with pytest.raises(ParameterError):
            solver_service.build(hadamard, params, generate(hadamard.shape, 2), 1)

    def test_zero_perturbation_matches_unperturbed(self, hadamard):
        mesh = generate(hadamard.shape, 4)
        params = StabilizationParams()
        base = solver_service.build(hadamard, params, mesh, 1)
        same = solver_service.build(hadamard.with_perturbation(Perturbation(mode="noise", seed=7)), params, mesh, 1)

        np.testing.assert_array_equal(base.rhs, same.rhs)
        assert abs(base.matrix - same.matrix).max() == 0.0

    def test_disk_line_source(self):
        problem = problem_service.get("disk-kink")
        system = solver_service.build(problem, StabilizationParams(), generate(problem.shape, 2), 1)
        source = system.rhs[system.num_primal:]
        assert source.sum() == pytest.approx(
            solver_service.source_functional(problem, system.W).sum(), rel=1e-14)
        assert np.any(system.f_h.coefficients)


class TestSolve:
    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_reproduces_harmonic_solution(self, harmonic, alpha):
        mesh = generate(harmonic.shape, 4)
        params = StabilizationParams(alpha=alpha, eta=0.0, tau=0.0, s_reg=3.0, tikhonov_off=True)
        result = solver_service.solve(solver_service.build(harmonic, params, mesh, 2))

        expected = nodal_interpolate(result.u_h.space, lambda x, y: x * y).coefficients
        scale = np.linalg.norm(expected)
        assert np.linalg.norm(result.u_h.coefficients - expected) <= 1e-10 * scale
        assert np.linalg.norm(result.z_h.coefficients) <= 1e-10 * scale
        assert result.residual <= 1e-10
        assert result.prs <= 1e-9

    def test_permutation_independence(self, hadamard, rng):
        system = solver_service.build(hadamard, StabilizationParams(), generate(hadamard.shape, 4), 2)
        reference = solver_service.solve(system)
        permuted = solver_service.solve(system.permuted(rng.permutation(system.size)))

        np.testing.assert_allclose(permuted.u_h.coefficients, reference.u_h.coefficients,
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(permuted.z_h.coefficients, reference.z_h.coefficients,
                                   rtol=1e-10, atol=1e-12)

    def test_linear_in_data(self, hadamard):
        mesh = generate(hadamard.shape, 4)
        params = StabilizationParams()
        base = solver_service.solve(solver_service.build(hadamard, params, mesh, 1))
        scaled = solver_service.solve(solver_service.build(hadamard.scaled(3.0), params, mesh, 1))
        np.testing.assert_allclose(scaled.u_h.coefficients, 3.0 * base.u_h.coefficients, rtol=1e-10, atol=1e-12)

    def test_h1_error_decreases(self, hadamard):
        params = StabilizationParams.preset("H1-optimal", s_reg=2.0)
        errors = []
        for mesh in refinement_sequence(hadamard.shape, 4, 3):
            result = solver_service.solve(solver_service.build(hadamard, params, mesh, 1))
            errors.append(analysis_service.subdomain_norms(result.u_h, hadamard.exact, hadamard.target)[1])
        assert errors[0] > errors[1] > errors[2]


class TestDominantPerturbation:
    def _delta(self, problem, mesh, perturbation):
        params = StabilizationParams.preset("L2-optimal")
        system = solver_service.build(problem.with_perturbation(perturbation), params, mesh, 1)
        response = solver_service.solve(system.perturbation_only())
        return analysis_service.perturbation_delta(response)["l2_Omega"]

    def test_amplitude_on_omega(self, hadamard):
        system = solver_service.build(hadamard, StabilizationParams(), generate(hadamard.shape, 4), 1)
        dq, df = solver_service.perturbations(
            hadamard.with_perturbation(Perturbation(q_amplitude=0.01, mode="dominant", seed=2)),
            system.params, system.V, system.W, system.matrix)
        assert df is None
        norm = math.sqrt(dq.coefficients @ forms.assemble_data_rhs(system.V, hadamard.omega, dq, 0.0))
        assert norm == pytest.approx(0.01, rel=1e-10)

    def test_needs_matrix(self, hadamard):
        V = FeSpace(generate(hadamard.shape, 2), 1)
        with pytest.raises(ParameterError):
            solver_service.perturbations(
                hadamard.with_perturbation(Perturbation(q_amplitude=0.01, mode="dominant")),
                StabilizationParams(), V, V.constrained())

    def test_exceeds_noise(self, hadamard):
        mesh = generate(hadamard.shape, 8)
        dominant = self._delta(hadamard, mesh, Perturbation(q_amplitude=1e-3, mode="dominant", seed=5))
        noise = self._delta(hadamard, mesh, Perturbation(q_amplitude=1e-3, mode="noise", seed=5))
        assert dominant > noise

    def test_linear_in_amplitude(self, hadamard):
        mesh = generate(hadamard.shape, 4)
        single = self._delta(hadamard, mesh, Perturbation(q_amplitude=1e-3, mode="dominant", seed=1))
        double = self._delta(hadamard, mesh, Perturbation(q_amplitude=2e-3, mode="dominant", seed=1))
        assert double == pytest.approx(2.0 * single, rel=1e-12)


class TestTripleNorm:
    @pytest.mark.parametrize(
        "alpha,eta,tau", list(itertools.product([0.0, 1.0], [0.0, math.inf], [0.0, 2.0])))
    def test_inf_sup_identity(self, hadamard, rng, alpha, eta, tau):
        params = StabilizationParams(alpha=alpha, eta=eta, tau=tau)
        system = solver_service.build(hadamard, params, generate(hadamard.shape, 4), 1)
        n = system.num_primal
        for _ in range(100):
            x = rng.standard_normal(system.size)
            y = np.concatenate([x[:n], -x[n:]])
            lhs = solver_service.bilinear(system, x, y)
            triple = solver_service.triple_norm(system, x[:n], x[n:])
            assert lhs == pytest.approx(triple ** 2, rel=1e-12)

    def test_affine_on_whole_domain(self, zero_problem, whole_domain):
        problem = replace(zero_problem, omega=whole_domain)
        params = StabilizationParams(alpha=0.0, eta=0.0, tikhonov_off=True)
        system = solver_service.build(problem, params, generate(problem.shape, 4), 1)
        v = nodal_interpolate(system.V, lambda x, y: 1.0 + x)
        z = np.zeros(system.W.num_free)
        assert solver_service.triple_norm(system, v, z) == pytest.approx(math.sqrt(7.0 / 3.0), rel=1e-12)


class TestCondition:
    def test_identity(self):
        report = estimate_condition(sp.identity(20, format="csc"))
        assert report.condition == pytest.approx(1.0, abs=1e-12)
        assert report.sigma_max == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        report = estimate_condition(sp.diags([1.0, 10.0]).tocsc(), seed=3)
        assert report.condition == pytest.approx(10.0, rel=2e-3)

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError) as excinfo:
            estimate_condition(sp.diags([1.0, 2.0, 3.0]).tocsc(), max_iter=1)
        assert excinfo.value.iterations == 1
        assert excinfo.value.residual > 0.0

    def test_residuals_reported(self):
        report = estimate_condition(sp.diags([1.0, 10.0]).tocsc(), seed=3)
        assert report.residual_max <= 1e-3
        assert report.residual_min <= 1e-3
        assert estimate_condition(sp.identity(5, format="csc")).residual_max <= 1e-12

    def test_indefinite_pair(self):
        # eigenvalues +3 and -3: the squared operator is 9 I
        report = estimate_condition(sp.csc_matrix(np.array([[0.0, 3.0], [3.0, 0.0]])))
        assert report.sigma_max == pytest.approx(3.0, rel=1e-12)
        assert report.sigma_min == pytest.approx(3.0, rel=1e-12)
        assert report.iterations_max == 1

    def test_singular_matrix(self):
        with pytest.raises(FactorizationError):
            estimate_condition(sp.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]])))

    def test_system_report(self, hadamard):
        system = solver_service.build(hadamard, StabilizationParams(), generate(hadamard.shape, 2), 1)
        report = solver_service.condition_number(system)
        assert report.dofs == system.size
        assert report.h == system.h
        assert report.condition >= 1.0

    @pytest.mark.parametrize("n", [4, 8])
    def test_matches_dense_singular_values(self, hadamard, n):
        params = StabilizationParams(alpha=1.0, eta=0.0, tau=2.0, s_reg=2.0)
        system = solver_service.build(hadamard, params, generate(hadamard.shape, n), 1)
        singular = np.linalg.svd(system.matrix.toarray(), compute_uv=False)
        report = solver_service.condition_number(system)

        assert report.sigma_max == pytest.approx(singular[0], rel=1e-2)
        assert report.sigma_min == pytest.approx(singular[-1], rel=1e-2)
        assert report.residual_max <= 1e-3 and report.residual_min <= 1e-3

    @pytest.mark.slow
    def test_condition_growth(self, hadamard):
        params = StabilizationParams(alpha=1.0, eta=0.0, tau=2.0, s_reg=2.0)
        hs, conds, sigma_max = [], [], []
        for mesh in refinement_sequence(hadamard.shape, 4, 4):
            system = solver_service.build(hadamard, params, mesh, 1)
            report = solver_service.condition_number(system)
            hs.append(system.h)
            conds.append(report.condition)
            sigma_max.append(report.sigma_max)
        # growth sits between the h^-2 of smooth unobserved modes and the h^-2s bound
        assert -5.0 <= fit_slope(hs, conds) <= -2.0
        scaled = [c * h ** 4 for c, h in zip(conds, hs)]
        assert max(scaled[1:]) <= 2.0 * scaled[0]
        assert max(sigma_max) <= 4.0 * min(sigma_max)
