"""
Lagrange finite element spaces on a :class:`~ucfem.fem.mesh.Mesh`.

Global DOF numbering is lexicographic by (entity kind, entity index, local
index): vertex DOFs first (numbered as the vertices), then p - 1 DOFs per
edge walked from the lower to the higher vertex index, then interior DOFs
per triangle. V_h^p uses every DOF; the constrained space W_h^p shares the
numbering and drops the boundary DOFs from its free set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ucfem.config import settings
from ucfem.exceptions import SpaceError
from ucfem.fem.element import Quadrature, lagrange_element, triangle_quadrature
from ucfem.fem.mesh import Mesh
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

PointFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ElementData:
    """Basis data of a space evaluated at the quadrature points of every element."""

    quadrature: Quadrature
    points: np.ndarray       # (T, Q, 2) physical quadrature points
    weights: np.ndarray      # (T, Q) quadrature weights times |det J|
    values: np.ndarray       # (Q, nloc)
    gradients: np.ndarray    # (T, Q, nloc, 2)
    laplacians: np.ndarray   # (T, Q, nloc)

    def sample(self, g: PointFunction) -> np.ndarray:
        """Evaluate a point function at all quadrature points: (T, Q)."""
        x = self.points[..., 0]
        y = self.points[..., 1]
        return np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape)


class FeSpace:
    """Continuous Lagrange space of order p, optionally with zero boundary values."""

    def __init__(self, mesh: Mesh, order: int, constrained: bool = False,
                 _dof_map: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None):
        self.mesh = mesh
        self.order = int(order)
        self.element = lagrange_element(self.order)
        self.constrained_flag = bool(constrained)

        if _dof_map is None:
            _dof_map = self._build_dof_map()
        self.cell_dofs, self.dof_coords, self.boundary_dofs = _dof_map
        self.num_dofs = int(self.dof_coords.shape[0])

        if self.constrained_flag:
            free = np.setdiff1d(np.arange(self.num_dofs), self.boundary_dofs)
        else:
            free = np.arange(self.num_dofs)
        free.setflags(write=False)
        self.free_dofs = free
        self._element_data: Dict[int, ElementData] = {}
        self._jacobians = mesh.jacobians()

    def __repr__(self) -> str:
        name = "W" if self.constrained_flag else "V"
        return f"FeSpace({name}_h^{self.order}, dofs={self.num_dofs}, free={self.num_free})"

    @property
    def num_free(self) -> int:
        return int(self.free_dofs.shape[0])

    @property
    def h(self) -> float:
        return self.mesh.h

    def _build_dof_map(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        mesh = self.mesh
        p = self.order
        element = self.element
        num_v, num_e, num_t = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
        per_edge = element.num_edge_interior
        per_cell = element.num_cell_interior

        cell_dofs = np.empty((num_t, element.num_local), dtype=np.int64)
        cell_dofs[:, :3] = mesh.triangles
        for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            global_edge = mesh.tri_edges[:, k]
            forward = mesh.triangles[:, a] < mesh.triangles[:, b]
            for j in range(per_edge):
                offset = np.where(forward, j, per_edge - 1 - j)
                cell_dofs[:, 3 + k * per_edge + j] = num_v + global_edge * per_edge + offset
        interior_base = num_v + num_e * per_edge
        for j in range(per_cell):
            cell_dofs[:, 3 + 3 * per_edge + j] = interior_base + np.arange(num_t) * per_cell + j

        num_dofs = num_v + num_e * per_edge + num_t * per_cell
        x0, jac, _ = mesh.jacobians()
        mapped = x0[:, None, :] + np.einsum("tab,qb->tqa", jac, element.nodes)
        dof_coords = np.empty((num_dofs, 2))
        dof_coords[cell_dofs.ravel()] = mapped.reshape(-1, 2)
        dof_coords[:num_v] = mesh.vertices

        boundary_edges = mesh.boundary_faces.edges
        boundary = [mesh.boundary_vertices]
        if per_edge:
            boundary.append((num_v + boundary_edges[:, None] * per_edge + np.arange(per_edge)).ravel())
        boundary_dofs = np.unique(np.concatenate(boundary))

        for array in (cell_dofs, dof_coords, boundary_dofs):
            array.setflags(write=False)
        expected = num_v + (p - 1) * num_e + (p - 1) * (p - 2) // 2 * num_t
        if num_dofs != expected:
            raise SpaceError(f"DOF count {num_dofs} differs from the Lagrange count {expected}")
        return cell_dofs, dof_coords, boundary_dofs

    def constrained(self) -> "FeSpace":
        """The subspace W_h^p with homogeneous boundary values."""
        if self.constrained_flag:
            return self
        return FeSpace(self.mesh, self.order, constrained=True,
                       _dof_map=(self.cell_dofs, self.dof_coords, self.boundary_dofs))

    def unconstrained(self) -> "FeSpace":
        """The full space V_h^p over the same DOF map."""
        if not self.constrained_flag:
            return self
        return FeSpace(self.mesh, self.order, constrained=False,
                       _dof_map=(self.cell_dofs, self.dof_coords, self.boundary_dofs))

    def element_data(self, degree: Optional[int] = None) -> ElementData:
        """Basis data at a quadrature rule of the given degree (default 2p)."""
        if degree is None:
            degree = 2 * self.order + settings.assembly_quadrature_offset
        if degree not in self._element_data:
            quad = triangle_quadrature(degree)
            x0, jac, inv_jac = self._jacobians
            det = np.abs(np.linalg.det(jac))
            points = x0[:, None, :] + np.einsum("tab,qb->tqa", jac, quad.points)
            weights = det[:, None] * quad.weights[None, :]
            values = self.element.values(quad.points)
            ref_grads = self.element.gradients(quad.points)
            ref_hess = self.element.hessians(quad.points)
            # grad_x = J^{-T} grad_xi ; hess_x = J^{-T} hess_xi J^{-1}
            gradients = np.einsum("tba,qib->tqia", inv_jac, ref_grads)
            laplacians = np.einsum("tba,qibc,tca->tqi", inv_jac, ref_hess, inv_jac)
            self._element_data[degree] = ElementData(
                quadrature=quad, points=points, weights=weights, values=values,
                gradients=gradients, laplacians=laplacians)
        return self._element_data[degree]

    def reference_coordinates(self, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Pull physical points (F, Q, 2) back to the reference triangles of ``elements``."""
        x0, _, inv_jac = self._jacobians
        return np.einsum("fab,fqb->fqa", inv_jac[elements], points - x0[elements][:, None, :])

    def basis_values(self, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Basis values of ``elements`` at physical points: (F, Q, nloc)."""
        return self.element.values(self.reference_coordinates(elements, points))

    def basis_gradients(self, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Physical basis gradients of ``elements`` at physical points: (F, Q, nloc, 2)."""
        _, _, inv_jac = self._jacobians
        ref_grads = self.element.gradients(self.reference_coordinates(elements, points))
        return np.einsum("fba,fqib->fqia", inv_jac[elements], ref_grads)

    def error_degree(self) -> int:
        return 2 * self.order + settings.error_quadrature_offset

    def assemble_local(self, local: np.ndarray, cols: Optional["FeSpace"] = None) -> sp.csr_matrix:
        """
        Scatter element matrices (T, nloc, nloc) into a sparse matrix over the
        free DOFs of ``self`` (rows) and ``cols`` (columns, default ``self``).
        """
        cols = cols or self
        full = self._scatter(local, self.cell_dofs, cols.cell_dofs, (self.num_dofs, cols.num_dofs))
        return restrict(full, self.free_dofs, cols.free_dofs)

    @staticmethod
    def _scatter(local: np.ndarray, row_dofs: np.ndarray, col_dofs: np.ndarray,
                 shape: Tuple[int, int]) -> sp.csr_matrix:
        rows = np.broadcast_to(row_dofs[:, :, None], local.shape).ravel()
        columns = np.broadcast_to(col_dofs[:, None, :], local.shape).ravel()
        matrix = sp.coo_matrix((local.ravel(), (rows, columns)), shape=shape).tocsr()
        matrix.sum_duplicates()
        return matrix

    def assemble_vector(self, local: np.ndarray) -> np.ndarray:
        """Scatter element vectors (T, nloc) into a vector over the free DOFs."""
        full = np.bincount(self.cell_dofs.ravel(), weights=local.ravel(), minlength=self.num_dofs)
        return full[self.free_dofs]

    def mass_matrix(self, weight: Optional[PointFunction] = None, degree: Optional[int] = None) -> sp.csr_matrix:
        """(w phi_j, phi_i) over the free DOFs; ``weight`` defaults to 1."""
        if degree is None:
            degree = self.error_degree() if weight is not None else None
        data = self.element_data(degree)
        w = data.weights if weight is None else data.weights * data.sample(weight)
        local = np.einsum("tq,qi,qj->tij", w, data.values, data.values)
        return self.assemble_local(local)

    def stiffness_matrix(self) -> sp.csr_matrix:
        """(grad phi_j, grad phi_i) over the free DOFs."""
        data = self.element_data()
        local = np.einsum("tq,tqid,tqjd->tij", data.weights, data.gradients, data.gradients)
        return self.assemble_local(local)

    def h1_matrix(self, seminorm: bool = False) -> sp.csr_matrix:
        """Gram matrix of the H^1 inner product (or the gradient seminorm)."""
        stiffness = self.stiffness_matrix()
        return stiffness if seminorm else (stiffness + self.mass_matrix()).tocsr()


def restrict(matrix: sp.csr_matrix, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    """Submatrix on the given row and column index sets."""
    if rows.shape[0] == matrix.shape[0] and cols.shape[0] == matrix.shape[1]:
        return matrix
    return matrix[rows][:, cols].tocsr()


@dataclass(frozen=True)
class FeFunction:
    """A finite element function given by its coefficients on the free DOFs."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coefficients.shape[0] != self.space.num_free:
            raise SpaceError(
                f"Coefficient vector has length {coefficients.shape[0]}, "
                f"space {self.space} has {self.space.num_free} free DOFs")
        object.__setattr__(self, "coefficients", coefficients)

    def full_coefficients(self) -> np.ndarray:
        """Coefficients over all DOFs (zero on constrained boundary DOFs)."""
        full = np.zeros(self.space.num_dofs)
        full[self.space.free_dofs] = self.coefficients
        return full

    def local_coefficients(self) -> np.ndarray:
        return self.full_coefficients()[self.space.cell_dofs]

    def values_at(self, data: ElementData) -> np.ndarray:
        return np.einsum("qi,ti->tq", data.values, self.local_coefficients())

    def gradients_at(self, data: ElementData) -> np.ndarray:
        return np.einsum("tqid,ti->tqd", data.gradients, self.local_coefficients())

    def laplacians_at(self, data: ElementData) -> np.ndarray:
        return np.einsum("tqi,ti->tq", data.laplacians, self.local_coefficients())

    def __add__(self, other: "FeFunction") -> "FeFunction":
        if other.space.free_dofs.shape != self.space.free_dofs.shape:
            raise SpaceError("Cannot add functions from different spaces")
        return FeFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        if other.space.free_dofs.shape != self.space.free_dofs.shape:
            raise SpaceError("Cannot subtract functions from different spaces")
        return FeFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, scalar: float) -> "FeFunction":
        return FeFunction(self.space, scalar * self.coefficients)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ElementField:
    """Elementwise values of a (possibly discontinuous) field at quadrature points."""

    data: ElementData
    values: np.ndarray   # (T, Q)


def evaluate(f: FeFunction, element: int, point) -> Tuple[float, np.ndarray]:
    """
    Value and physical gradient of ``f`` at a reference point of one element.

    Args:
        f: Finite element function
        element: Element index
        point: Reference coordinates (xi, eta) in the unit triangle

    Returns:
        Tuple[float, np.ndarray]: (value, gradient)

    Raises:
        SpaceError: If the element index is out of range
    """
    space = f.space
    if not 0 <= element < space.mesh.num_triangles:
        raise SpaceError(f"Element index {element} out of range [0, {space.mesh.num_triangles})")
    xi = np.asarray(point, dtype=float).reshape(1, 2)
    coeffs = f.full_coefficients()[space.cell_dofs[element]]
    _, _, inv_jac = space._jacobians
    value = float(space.element.values(xi)[0] @ coeffs)
    ref_grad = space.element.gradients(xi)[0]
    gradient = inv_jac[element].T @ (ref_grad.T @ coeffs)
    return value, gradient


def nodal_interpolate(space: FeSpace, g: PointFunction) -> FeFunction:
    """
    Lagrange interpolant of a point function (boundary DOFs dropped on W_h^p).

    Raises:
        SpaceError: If g is not finite at some DOF node
    """
    x = space.dof_coords[:, 0]
    y = space.dof_coords[:, 1]
    samples = np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise SpaceError(f"Non-finite sample at DOF {bad} {tuple(space.dof_coords[bad])}")
    return FeFunction(space, samples[space.free_dofs].copy())


def l2_project_onto_constrained(space: FeSpace, rhs: np.ndarray) -> FeFunction:
    """
    Discrete L^2 projection onto W_h^p of a functional given by its action
    on the basis: returns f_h with (f_h, w_h) = <f, w_h> for all w_h.

    Raises:
        SpaceError: If the space is not constrained, the rhs has the wrong
            length or the mass matrix is singular
    """
    if not space.constrained_flag:
        raise SpaceError("Projection target must be the constrained space W_h^p")
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    if rhs.shape[0] != space.num_free:
        raise SpaceError(f"Right-hand side has length {rhs.shape[0]}, expected {space.num_free}")
    if not np.any(rhs):
        return FeFunction(space, np.zeros(space.num_free))

    mass = space.mass_matrix().tocsc()
    try:
        lu = splu(mass)
    except RuntimeError as e:
        logger.error(f"Singular mass matrix on {space}: {e}", exc_info=True)
        raise SpaceError(f"Singular mass matrix on {space}: {e}") from e
    coefficients = lu.solve(rhs)
    residual = np.linalg.norm(mass @ coefficients - rhs) / np.linalg.norm(rhs)
    if residual > settings.mass_solve_rtol:
        coefficients += lu.solve(rhs - mass @ coefficients)
        residual = np.linalg.norm(mass @ coefficients - rhs) / np.linalg.norm(rhs)
        if residual > settings.mass_solve_rtol:
            logger.warning(f"Mass solve residual {residual:.2e} above {settings.mass_solve_rtol:.0e}")
    return FeFunction(space, coefficients)


def elementwise_schrodinger(space: FeSpace, potential: PointFunction, f: FeFunction,
                            degree: Optional[int] = None) -> ElementField:
    """
    Broken Schrodinger operator -Delta(f|_K) + P f|_K at the quadrature points.

    The Laplacian is exact for the polynomial on each element; the potential
    is sampled pointwise.
    """
    data = space.element_data(degree if degree is not None else space.error_degree())
    values = -f.laplacians_at(data) + data.sample(potential) * f.values_at(data)
    return ElementField(data=data, values=values)


def prolongate(f: FeFunction, fine_space: FeSpace) -> FeFunction:
    """
    Transfer ``f`` to a space on the red refinement of its mesh.

    Every fine DOF takes the value of the parent's coarse polynomial at the
    node's place in the parent's reference triangle, so the transfer never
    extrapolates. For straight-edged meshes this is exact interpolation. On
    disk meshes the boundary midpoints were projected onto the circle: the
    nodes of those children take the coarse values at the unprojected edge
    points, a geometric error of the order of the projection distance, O(h^2).

    Raises:
        SpaceError: If the fine mesh is not a refinement of f's mesh
    """
    coarse = f.space
    fine_mesh = fine_space.mesh
    if fine_mesh.parents is None or fine_mesh.parents.max() >= coarse.mesh.num_triangles \
            or fine_mesh.num_triangles != 4 * coarse.mesh.num_triangles:
        raise SpaceError("Target mesh is not the red refinement of the source mesh")
    if fine_space.order != coarse.order:
        raise SpaceError("Prolongation requires equal polynomial orders")

    parents = fine_mesh.parents
    children = np.arange(fine_mesh.num_triangles)
    # red children have their corners at half-integer reference points of the parent
    corners = coarse.reference_coordinates(parents, fine_mesh.vertices[fine_mesh.triangles])
    corners = np.round(2.0 * corners) / 2.0
    xi = fine_space.reference_coordinates(children, fine_space.dof_coords[fine_space.cell_dofs])
    edges = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=-1)
    nodes = corners[:, None, 0] + np.einsum("tab,tnb->tna", edges, xi)
    basis = coarse.element.values(nodes)   # (Tf, nloc_fine, nloc_coarse)
    local = np.einsum("tni,ti->tn", basis, f.local_coefficients()[parents])

    full = np.empty(fine_space.num_dofs)
    full[fine_space.cell_dofs.ravel()] = local.ravel()
    return FeFunction(fine_space, full[fine_space.free_dofs])
