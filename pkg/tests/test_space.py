import math

import numpy as np
import pytest

from ucfem.exceptions import SpaceError
from ucfem.fem.forms import assemble_source
from ucfem.fem.mesh import DomainShape, Mesh, generate, refine
from ucfem.fem.space import (
    FeFunction,
    FeSpace,
    elementwise_schrodinger,
    evaluate,
    l2_project_onto_constrained,
    nodal_interpolate,
    prolongate,
)
from ucfem.services.analysis_service import analysis_service, fit_slope
from ucfem.models.problem import ExactSolution


def _x(x, y):
    return x


class TestDofMap:
    @pytest.mark.parametrize("order,expected", [(1, 9), (2, 25), (3, 49)])
    def test_dof_count(self, unit_square, order, expected):
        space = FeSpace(generate(unit_square, 2), order)
        assert space.num_dofs == expected
        assert space.num_free == expected

    def test_constrained_drops_boundary(self, unit_square):
        W = FeSpace(generate(unit_square, 2), 2).constrained()
        assert W.num_free == 9

        coords = W.dof_coords[W.free_dofs]
        on_boundary = np.isclose(coords, 0.0) | np.isclose(coords, 1.0)
        assert not on_boundary.any()
        assert W.constrained() is W
        assert W.unconstrained().num_free == 25

    def test_shared_edge_dofs_agree(self, unit_square):
        space = FeSpace(generate(unit_square, 3), 3)
        x0, jac, _ = space.mesh.jacobians()
        mapped = x0[:, None, :] + np.einsum("tab,qb->tqa", jac, space.element.nodes)
        np.testing.assert_allclose(space.dof_coords[space.cell_dofs], mapped, atol=1e-14)


class TestMatrices:
    def test_reference_stiffness(self):
        mesh = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
        stiffness = FeSpace(mesh, 1).stiffness_matrix().toarray()
        expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
        np.testing.assert_allclose(stiffness, expected, atol=1e-15)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_mass_integrates_constants(self, strip, order):
        space = FeSpace(generate(strip, 3), order)
        ones = np.ones(space.num_free)
        assert ones @ (space.mass_matrix() @ ones) == pytest.approx(math.pi, rel=1e-13)
        assert np.abs(space.stiffness_matrix() @ ones).max() < 1e-12

    def test_h1_seminorm_switch(self, square_space):
        full = square_space.h1_matrix()
        semi = square_space.h1_matrix(seminorm=True)
        np.testing.assert_allclose((full - semi).toarray(), square_space.mass_matrix().toarray(), atol=1e-15)


class TestEvaluate:
    def test_linear_function(self, square_space):
        f = nodal_interpolate(square_space, _x)
        value, gradient = evaluate(f, 3, (0.2, 0.3))

        x0, jac, _ = square_space.mesh.jacobians()
        point = x0[3] + jac[3] @ np.array([0.2, 0.3])
        assert value == pytest.approx(point[0], abs=1e-14)
        np.testing.assert_allclose(gradient, [1.0, 0.0], atol=1e-13)

    def test_constant(self, square_space):
        value, gradient = evaluate(FeFunction(square_space, np.ones(square_space.num_free)), 0, (1 / 3, 1 / 3))
        assert value == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(gradient, 0.0, atol=1e-13)

    def test_quadratic_exact(self, square_mesh):
        f = nodal_interpolate(FeSpace(square_mesh, 2), lambda x, y: x * x)
        x0, jac, _ = square_mesh.jacobians()
        point = x0[5] + jac[5] @ np.array([0.25, 0.25])
        value, gradient = evaluate(f, 5, (0.25, 0.25))

        assert value == pytest.approx(point[0] ** 2, abs=1e-13)
        np.testing.assert_allclose(gradient, [2 * point[0], 0.0], atol=1e-12)

    def test_element_out_of_range(self, square_space):
        f = FeFunction(square_space, np.zeros(square_space.num_free))
        with pytest.raises(SpaceError):
            evaluate(f, square_space.mesh.num_triangles, (0.1, 0.1))


class TestInterpolation:
    def test_wrong_coefficient_length(self, square_space):
        with pytest.raises(SpaceError):
            FeFunction(square_space, np.zeros(square_space.num_free + 1))

    def test_non_finite_sample(self, square_space):
        with pytest.raises(SpaceError):
            nodal_interpolate(square_space, lambda x, y: 1.0 / x)

    def test_constrained_drops_boundary_values(self, square_mesh):
        W = FeSpace(square_mesh, 1).constrained()
        f = nodal_interpolate(W, lambda x, y: 1.0 + x)
        np.testing.assert_allclose(f.coefficients, 1.0 + W.dof_coords[W.free_dofs, 0])

    def test_kink_reproduced_on_disk(self, disk):
        exact = ExactSolution(lambda x, y: np.where(y > 0, -y, 0.0),
                              lambda x, y: (0.0 * x, np.where(y > 0, -1.0, 0.0)))
        f = nodal_interpolate(FeSpace(generate(disk, 4), 1), exact.value)
        l2, h1 = analysis_service.subdomain_norms(f, exact)
        assert l2 < 1e-12
        assert h1 < 1e-12

    def test_p1_interpolation_rate(self, strip):
        exact = ExactSolution(lambda x, y: np.sin(x) * np.sinh(y),
                              lambda x, y: (np.cos(x) * np.sinh(y), np.sin(x) * np.cosh(y)))
        hs, errors = [], []
        for n in (4, 8, 16, 32):
            space = FeSpace(generate(strip, n), 1)
            hs.append(space.h)
            errors.append(analysis_service.subdomain_norms(nodal_interpolate(space, exact.value), exact)[0])
        assert fit_slope(hs, errors) == pytest.approx(2.0, abs=0.1)


class TestProjection:
    def test_zero_rhs(self, square_space):
        W = square_space.constrained()
        f_h = l2_project_onto_constrained(W, np.zeros(W.num_free))
        assert not np.any(f_h.coefficients)

    def test_idempotent(self, square_mesh):
        W = FeSpace(square_mesh, 2).constrained()
        f = nodal_interpolate(W, lambda x, y: np.sin(math.pi * x) * np.sin(math.pi * y))
        f_h = l2_project_onto_constrained(W, W.mass_matrix() @ f.coefficients)
        np.testing.assert_allclose(f_h.coefficients, f.coefficients, rtol=1e-10, atol=1e-12)

    def test_stability(self, square_mesh):
        W = FeSpace(square_mesh, 2).constrained()
        f_h = l2_project_onto_constrained(W, assemble_source(W, lambda x, y: np.exp(x)))
        norm_h = math.sqrt(f_h.coefficients @ (W.mass_matrix() @ f_h.coefficients))

        data = W.element_data(W.error_degree())
        norm = math.sqrt(float(np.sum(data.weights * np.exp(data.points[..., 0]) ** 2)))
        assert norm_h <= norm

    def test_requires_constrained_space(self, square_space):
        with pytest.raises(SpaceError):
            l2_project_onto_constrained(square_space, np.ones(square_space.num_free))

    def test_rhs_length(self, square_space):
        W = square_space.constrained()
        with pytest.raises(SpaceError):
            l2_project_onto_constrained(W, np.ones(W.num_free + 2))


class TestSchrodinger:
    def test_linear_without_potential(self, square_mesh):
        f = nodal_interpolate(FeSpace(square_mesh, 1), lambda x, y: 2 * x - y)
        field = elementwise_schrodinger(f.space, lambda x, y: 0.0 * x, f)
        np.testing.assert_allclose(field.values, 0.0, atol=1e-12)

    def test_quadratic_laplacian(self, square_mesh):
        f = nodal_interpolate(FeSpace(square_mesh, 2), lambda x, y: x * x)
        field = elementwise_schrodinger(f.space, lambda x, y: 0.0 * x, f)
        np.testing.assert_allclose(field.values, -2.0, atol=1e-10)

    def test_constant_with_unit_potential(self, square_space):
        f = FeFunction(square_space, np.ones(square_space.num_free))
        field = elementwise_schrodinger(square_space, lambda x, y: 1.0 + 0.0 * x, f)
        np.testing.assert_allclose(field.values, 1.0, atol=1e-13)


class TestProlongate:
    def test_nested_quadratic(self, unit_square):
        coarse = FeSpace(generate(unit_square, 2), 2)
        fine = FeSpace(refine(coarse.mesh), 2)
        g = lambda x, y: x * x - 0.5 * x * y + y  # noqa: E731

        prolonged = prolongate(nodal_interpolate(coarse, g), fine)
        np.testing.assert_allclose(prolonged.coefficients, nodal_interpolate(fine, g).coefficients, atol=1e-12)

    def test_no_overshoot_on_projected_boundary(self):
        coarse = FeSpace(generate(DomainShape.unit_disk(), 2), 1)
        fine = FeSpace(refine(coarse.mesh), 1)
        radius_squared = nodal_interpolate(coarse, lambda x, y: x * x + y * y)

        prolonged = prolongate(radius_squared, fine)
        assert prolonged.coefficients.max() <= 1.0 + 1e-14
        boundary = np.isclose(np.hypot(*fine.dof_coords.T), 1.0)
        np.testing.assert_allclose(prolonged.full_coefficients()[boundary], 1.0, atol=1e-14)

    def test_disk_transfer_close_to_interpolation(self):
        coarse = FeSpace(generate(DomainShape.unit_disk(), 4), 2)
        fine = FeSpace(refine(coarse.mesh), 2)
        g = lambda x, y: 1.0 + x - 0.5 * y  # noqa: E731

        prolonged = prolongate(nodal_interpolate(coarse, g), fine)
        gap = np.abs(prolonged.coefficients - nodal_interpolate(fine, g).coefficients).max()
        assert 0.0 < gap <= 0.1

    def test_rejects_unrelated_mesh(self, unit_square):
        coarse = FeSpace(generate(unit_square, 2), 1)
        other = FeSpace(generate(unit_square, 4), 1)
        with pytest.raises(SpaceError):
            prolongate(FeFunction(coarse, np.zeros(coarse.num_free)), other)

    def test_rejects_order_change(self, unit_square):
        coarse = FeSpace(generate(unit_square, 2), 1)
        fine = FeSpace(refine(coarse.mesh), 2)
        with pytest.raises(SpaceError):
            prolongate(FeFunction(coarse, np.zeros(coarse.num_free)), fine)


def test_shapes_are_independent():
    shape = DomainShape.rectangle(-1.0, 1.0, 0.0, 2.0)
    space = FeSpace(generate(shape, 2), 1)
    ones = np.ones(space.num_free)
    assert ones @ (space.mass_matrix() @ ones) == pytest.approx(4.0, rel=1e-13)
