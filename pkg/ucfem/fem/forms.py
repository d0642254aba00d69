"""
Bilinear and linear forms of the stabilized primal-dual method.

Every assembler returns matrices over the free DOFs of its spaces: rows
belong to the test space, columns to the trial space. Element and face
contributions are scattered through a COO triplet list in a fixed order and
summed on conversion to CSR, so the result does not depend on scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ucfem.exceptions import AssemblyError, ParameterError
from ucfem.fem.element import line_quadrature
from ucfem.fem.mesh import FaceSet, SubdomainIndicator
from ucfem.fem.space import ElementData, FeFunction, FeSpace, PointFunction, restrict
from ucfem.models.params import StabilizationParams
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

Data = Union[PointFunction, FeFunction]


@dataclass(frozen=True)
class AssembledForm:
    """Sparse matrix of a bilinear form plus a record of how it was built."""

    matrix: sp.csr_matrix
    name: str
    h: float
    weights: Dict[str, float] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def __call__(self, u: np.ndarray, v: np.ndarray) -> float:
        """Evaluate the form on coefficient vectors: v^T M u."""
        return float(np.asarray(v) @ (self.matrix @ np.asarray(u)))

    def asymmetry(self) -> float:
        """max |M - M^T| relative to max |M| (0 for the zero matrix)."""
        scale = abs(self.matrix).max()
        if scale == 0:
            return 0.0
        return float(abs(self.matrix - self.matrix.T).max() / scale)

    def scaled(self, factor: float, name: Optional[str] = None) -> "AssembledForm":
        return AssembledForm((factor * self.matrix).tocsr(), name or self.name, self.h,
                             {**self.weights, "factor": factor})


def _zero_potential(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.zeros(np.broadcast(x, y).shape)


def _check_same_mesh(trial: FeSpace, test: FeSpace) -> None:
    if trial.mesh is not test.mesh:
        raise AssemblyError("Trial and test spaces live on different meshes")


def _sample(data: ElementData, g: Data) -> np.ndarray:
    """Values of a point function or finite element function at quadrature points."""
    if isinstance(g, FeFunction):
        if g.space.mesh.num_triangles != data.points.shape[0]:
            raise AssemblyError("Finite element datum lives on a different mesh")
        other = g.space.element_data(data.quadrature.degree)
        return g.values_at(other)
    return data.sample(g)


def _schrodinger_basis(data: ElementData, potential: PointFunction) -> np.ndarray:
    """-Delta phi_i + P phi_i at quadrature points: (T, Q, nloc)."""
    return -data.laplacians + data.sample(potential)[:, :, None] * data.values[None, :, :]


def assemble_a(trial: FeSpace, test: FeSpace, potential: Optional[PointFunction] = None) -> AssembledForm:
    """
    Schrodinger bilinear form a(u, v) = (grad u, grad v) + (P u, v).

    Args:
        trial: Space of u (columns)
        test: Space of v (rows)
        potential: P as a point function (None for P = 0)

    Returns:
        AssembledForm: matrix with entry (i, j) = a(phi_j, psi_i)

    Raises:
        AssemblyError: If the spaces live on different meshes
    """
    _check_same_mesh(trial, test)
    degree = max(trial.error_degree(), test.error_degree())
    u = trial.element_data(degree)
    v = test.element_data(degree)
    local = np.einsum("tq,tqid,tqjd->tij", u.weights, v.gradients, u.gradients)
    if potential is not None:
        pw = u.weights * u.sample(potential)
        local = local + np.einsum("tq,qi,qj->tij", pw, v.values, u.values)
    return AssembledForm(test.assemble_local(local, cols=trial), "a", trial.h)


def _face_normal_derivatives(space: FeSpace, faces: FaceSet,
                             two_sided: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Quadrature weights h |F| w_q, basis normal derivatives (jumps when two-sided) and their DOFs.

    Shapes are (F, Q), (F, Q, nloc) and (F, nloc); two-sided faces carry both
    neighbours, so nloc doubles.
    """
    mesh = space.mesh
    t_ref, w_ref = line_quadrature(2 * (space.order - 1))
    a = mesh.vertices[faces.vertices[:, 0]]
    b = mesh.vertices[faces.vertices[:, 1]]
    points = a[:, None, :] + t_ref[None, :, None] * (b - a)[:, None, :]       # (F, Q, 2)
    weights = mesh.h * faces.lengths[:, None] * w_ref[None, :]               # (F, Q)

    derivatives = np.einsum("fqid,fd->fqi", space.basis_gradients(faces.left, points), faces.normals)
    dofs = space.cell_dofs[faces.left]
    if two_sided:
        right = np.einsum("fqid,fd->fqi", space.basis_gradients(faces.right, points), faces.normals)
        derivatives = np.concatenate([derivatives, -right], axis=2)
        dofs = np.concatenate([dofs, space.cell_dofs[faces.right]], axis=1)
    return weights, derivatives, dofs


def _face_matrix(space: FeSpace, faces: FaceSet, two_sided: bool) -> sp.csr_matrix:
    """
    sum_F int_F h [grad u . n][grad v . n] over a face set.

    One-sided faces use the normal derivative from the owner element only.
    """
    if len(faces) == 0:
        return sp.csr_matrix((space.num_free, space.num_free))
    weights, derivatives, dofs = _face_normal_derivatives(space, faces, two_sided)
    local = np.einsum("fq,fqi,fqj->fij", weights, derivatives, derivatives)
    full = FeSpace._scatter(local, dofs, dofs, (space.num_dofs, space.num_dofs))
    return restrict(full, space.free_dofs, space.free_dofs)


def jump_seminorm(f: FeFunction) -> float:
    """
    J_h(u, u)^(1/2) from the jumps of u at the face quadrature points.

    Stays at roundoff level when grad u is continuous, unlike u^T J u.
    """
    faces = f.space.mesh.interior_faces
    if len(faces) == 0:
        return 0.0
    weights, derivatives, dofs = _face_normal_derivatives(f.space, faces, two_sided=True)
    jumps = np.einsum("fqi,fi->fq", derivatives, f.full_coefficients()[dofs])
    return float(np.sqrt(np.sum(weights * jumps ** 2)))


def assemble_jump(space: FeSpace) -> AssembledForm:
    """
    Normal-gradient jump penalty J_h(u, v) over interior faces.

    The face weight is the global mesh size h.
    """
    matrix = _face_matrix(space, space.mesh.interior_faces, two_sided=True)
    return AssembledForm(matrix, "jump", space.h)


def assemble_boundary_normal(space: FeSpace) -> AssembledForm:
    """
    sum over boundary faces of int_F h d_n u d_n v (no h^(2 eta) prefactor).

    Raises:
        AssemblyError: If the space is not the constrained space W_h^p
    """
    if not space.constrained_flag:
        raise AssemblyError("Boundary normal term is defined on the constrained space W_h^p")
    matrix = _face_matrix(space, space.mesh.boundary_faces, two_sided=False)
    return AssembledForm(matrix, "boundary_normal", space.h)


def assemble_residual_term(space: FeSpace, potential: Optional[PointFunction] = None) -> AssembledForm:
    """Broken residual term sum_K int_K h^2 L_h u L_h v."""
    data = space.element_data(space.error_degree())
    lphi = _schrodinger_basis(data, potential or _zero_potential)
    h2 = space.h ** 2
    local = h2 * np.einsum("tq,tqi,tqj->tij", data.weights, lphi, lphi)
    return AssembledForm(space.assemble_local(local), "residual", space.h, {"h^2": h2})


def assemble_tikhonov_inner(space: FeSpace, kind: str = "h1") -> AssembledForm:
    """Gram matrix of the Tikhonov inner product: full H^1 or the gradient seminorm."""
    if kind not in ("h1", "h1_seminorm"):
        raise AssemblyError(f"Unknown Tikhonov inner product '{kind}'")
    return AssembledForm(space.h1_matrix(seminorm=kind == "h1_seminorm"), kind, space.h)


def assemble_mass(space: FeSpace, weight: Optional[PointFunction] = None) -> AssembledForm:
    """L^2 mass matrix, optionally weighted by a point function."""
    return AssembledForm(space.mass_matrix(weight), "mass" if weight is None else "weighted_mass", space.h)


def compose_primal_stabilizer(params: StabilizationParams, jump: AssembledForm, residual: AssembledForm,
                              h1_inner: AssembledForm) -> AssembledForm:
    """s_h = J_h + (h L_h., h L_h.) + h^(2(s-1)) <., .>; the last term is dropped when Tikhonov is off."""
    h = jump.h
    weight = params.primal_tikhonov_weight(h)
    matrix = jump.matrix + residual.matrix
    if weight:
        matrix = matrix + weight * h1_inner.matrix
    return AssembledForm(matrix.tocsr(), "primal_stabilizer", h,
                         {"jump": 1.0, "residual": 1.0, "tikhonov": weight})


def compose_dual_stabilizer(params: StabilizationParams, jump: AssembledForm, boundary: AssembledForm,
                            residual: AssembledForm, h1_inner: AssembledForm) -> AssembledForm:
    """
    s*_h = h^(2 eta) (J_h + boundary + residual) + h^tau <., .>.

    For eta = inf the first group is omitted, for tau = inf the last term.

    Raises:
        ParameterError: If the dual block vanishes identically (eta = inf without a dual Tikhonov term)
    """
    if params.degenerate_dual:
        raise ParameterError(
            f"Degenerate dual block: eta=inf without a dual Tikhonov term leaves s*_h = 0 ({params.label()})")
    h = jump.h
    group = params.dual_group_weight(h)
    tikhonov = params.dual_tikhonov_weight(h)
    matrix = sp.csr_matrix(jump.matrix.shape)
    if group:
        matrix = matrix + group * (jump.matrix + boundary.matrix + residual.matrix)
    if tikhonov:
        matrix = matrix + tikhonov * h1_inner.matrix
    return AssembledForm(matrix.tocsr(), "dual_stabilizer", h, {"group": group, "tikhonov": tikhonov})


def assemble_G(space: FeSpace, f_h: FeFunction, potential: Optional[PointFunction] = None) -> np.ndarray:
    """Consistency functional G_i = h^2 sum_K int_K f_h L_h phi_i."""
    _check_same_mesh(space, f_h.space)
    if not np.any(f_h.coefficients):
        return np.zeros(space.num_free)
    data = space.element_data(space.error_degree())
    lphi = _schrodinger_basis(data, potential or _zero_potential)
    fvals = _sample(data, f_h)
    local = space.h ** 2 * np.einsum("tq,tq,tqi->ti", data.weights, fvals, lphi)
    return space.assemble_vector(local)


def _subdomain_weights(space: FeSpace, omega: SubdomainIndicator) -> Tuple[ElementData, np.ndarray]:
    data = space.element_data(space.error_degree())
    mask = omega(data.points[..., 0], data.points[..., 1])
    if not mask.any():
        raise AssemblyError(f"Subdomain '{omega.label}' contains no quadrature point")
    return data, data.weights * mask


def assemble_data_rhs(space: FeSpace, omega: SubdomainIndicator, q: Data, alpha: float) -> np.ndarray:
    """Right-hand side h^(-2 alpha) (q, phi_i)_omega for a point or finite element datum."""
    data, w = _subdomain_weights(space, omega)
    local = np.einsum("tq,tq,qi->ti", w, _sample(data, q), data.values)
    return space.h ** (-2.0 * alpha) * space.assemble_vector(local)


def assemble_data_term(space: FeSpace, omega: SubdomainIndicator, q: Data,
                       alpha: float) -> Tuple[AssembledForm, np.ndarray]:
    """
    Weighted data-fidelity block h^(-2 alpha) (u, v)_omega and its right-hand side.

    The indicator is evaluated at quadrature points, so elements cut by the
    boundary of omega contribute partially.

    Raises:
        AssemblyError: If no quadrature point falls inside omega
    """
    data, w = _subdomain_weights(space, omega)
    weight = space.h ** (-2.0 * alpha)
    local = weight * np.einsum("tq,qi,qj->tij", w, data.values, data.values)
    rhs = assemble_data_rhs(space, omega, q, alpha)
    form = AssembledForm(space.assemble_local(local), f"data[{omega.label}]", space.h, {"h^-2alpha": weight})
    return form, rhs


def assemble_source(space: FeSpace, f: Data) -> np.ndarray:
    """L^2 source functional <f, phi_i> by quadrature of degree 2p + 2."""
    data = space.element_data(space.error_degree())
    local = np.einsum("tq,tq,qi->ti", data.weights, _sample(data, f), data.values)
    return space.assemble_vector(local)


def assemble_line_source(space: FeSpace, start=(-1.0, 0.0), end=(1.0, 0.0),
                         density: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """
    Line-measure functional <f, phi_i> = int_segment density * phi_i ds.

    Raises:
        MeshError: If the segment is not a union of mesh edges
    """
    mesh = space.mesh
    edges = mesh.edges_on_segment(start, end)
    t_ref, w_ref = line_quadrature(space.order + 2)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    points = a[:, None, :] + t_ref[None, :, None] * (b - a)[:, None, :]
    weights = mesh.edge_lengths[edges][:, None] * w_ref[None, :]
    if density is not None:
        weights = weights * density(points[..., 0], points[..., 1])
    owners = mesh.edge_tris[edges, 0]
    local = np.einsum("fq,fqi->fi", weights, space.basis_values(owners, points))
    full = np.bincount(space.cell_dofs[owners].ravel(), weights=local.ravel(), minlength=space.num_dofs)
    logger.debug(f"Line source over {len(edges)} edges, total weight {weights.sum():.6g}")
    return full[space.free_dofs]
