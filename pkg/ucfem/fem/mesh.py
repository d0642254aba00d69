"""
Conforming triangulations of the computational domains.

Two generators are provided: a structured rectangle mesh (each grid cell cut
along its lower-left to upper-right diagonal) and a ring mesh of the unit
disk whose sector boundaries contain the segment ``y = 0``. Uniform red
refinement splits every triangle into four; on the disk the new boundary
midpoints are snapped back onto the unit circle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ucfem.exceptions import MeshError
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

Point = Tuple[float, float]
Segment = Tuple[Point, Point]

# local edge k of a triangle joins local vertices _LOCAL_EDGES[k]
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])

_Y_AXIS_SEGMENT: Segment = ((-1.0, 0.0), (1.0, 0.0))


@dataclass(frozen=True)
class DomainShape:
    """Computational domain: an axis-aligned rectangle or the unit disk."""

    kind: str
    bounds: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    sectors: int = 6
    mesh_lines: Tuple[Segment, ...] = ()

    def __post_init__(self):
        if self.kind not in ("rectangle", "disk"):
            raise MeshError(f"Unknown domain kind: {self.kind}")
        if self.kind == "rectangle":
            a, b, c, d = self.bounds
            if not (b > a and d > c):
                raise MeshError(f"Degenerate rectangle bounds: {self.bounds}")
        if self.kind == "disk" and (self.sectors < 4 or self.sectors % 2):
            raise MeshError(f"Disk sector count must be even and >= 4, got {self.sectors}")

    @classmethod
    def rectangle(cls, a: float, b: float, c: float, d: float) -> "DomainShape":
        """Rectangle (a, b) x (c, d)."""
        return cls(kind="rectangle", bounds=(float(a), float(b), float(c), float(d)))

    @classmethod
    def unit_disk(cls, sectors: int = 6) -> "DomainShape":
        """Inscribed-polygon unit disk with y = 0 as a mesh line."""
        return cls(kind="disk", bounds=(-1.0, 1.0, -1.0, 1.0), sectors=sectors,
                   mesh_lines=(_Y_AXIS_SEGMENT,))

    @property
    def label(self) -> str:
        if self.kind == "rectangle":
            return "rectangle({:g},{:g},{:g},{:g})".format(*self.bounds)
        return f"unit-disk-polygon({self.sectors})"

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Open-domain membership of points (exact circle for the disk)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "disk":
            return x * x + y * y < 1.0
        a, b, c, d = self.bounds
        return (x > a) & (x < b) & (y > c) & (y < d)

    def project_boundary(self, points: np.ndarray) -> np.ndarray:
        """Map boundary points onto the exact boundary (identity for rectangles)."""
        if self.kind != "disk":
            return points
        radius = np.linalg.norm(points, axis=1, keepdims=True)
        return points / radius


@dataclass(frozen=True)
class SubdomainIndicator:
    """Membership predicate for a subdomain such as omega or B."""

    label: str
    predicate: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.predicate(x, y), dtype=bool), np.broadcast(x, y).shape)


@dataclass(frozen=True)
class FaceSet:
    """Interior or boundary faces (edges) with their adjacent elements."""

    edges: np.ndarray       # global edge indices
    vertices: np.ndarray    # (F, 2) vertex pairs
    left: np.ndarray        # K1 (the owner element for boundary faces)
    right: np.ndarray       # K2, -1 on the boundary
    normals: np.ndarray     # unit normal K1 -> K2 (outward on the boundary)
    lengths: np.ndarray

    def __len__(self) -> int:
        return int(self.edges.shape[0])


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class Mesh:
    """Immutable conforming triangulation with edge adjacency."""

    def __init__(
        self,
        vertices: np.ndarray,
        triangles: np.ndarray,
        shape: Optional[DomainShape] = None,
        parents: Optional[np.ndarray] = None,
    ):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size == 0:
            raise MeshError("Mesh contains no triangles")
        if triangles.min() < 0 or triangles.max() >= vertices.shape[0]:
            raise MeshError("Triangle refers to a vertex that does not exist")

        signed = self._signed_areas(vertices, triangles)
        if np.any(np.abs(signed) <= 1e-14 * max(1.0, np.abs(signed).max())):
            raise MeshError("Mesh contains degenerate triangles")
        flip = signed < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        self.vertices = _frozen(vertices)
        self.triangles = _frozen(triangles)
        self.shape = shape
        self.parents = None if parents is None else _frozen(np.asarray(parents, dtype=np.int64))
        self._build_topology()

    def __repr__(self) -> str:
        return (f"Mesh(vertices={self.num_vertices}, triangles={self.num_triangles}, "
                f"edges={self.num_edges}, h={self.h:.4g})")

    @staticmethod
    def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
        p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
        d1 = p1 - p0
        d2 = p2 - p0
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def _build_topology(self) -> None:
        tri = self.triangles
        num_tri = tri.shape[0]

        all_edges = np.sort(tri[:, _LOCAL_EDGES], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        self.edges = _frozen(edges)
        self.tri_edges = _frozen(inverse.reshape(num_tri, 3))

        counts = np.bincount(inverse, minlength=edges.shape[0])
        if counts.max() > 2:
            raise MeshError("Non-manifold mesh: an edge is shared by more than two triangles")

        order = np.argsort(inverse, kind="stable")
        owners = np.repeat(np.arange(num_tri), 3)[order]
        first = np.searchsorted(inverse[order], np.arange(edges.shape[0]))
        edge_tris = -np.ones((edges.shape[0], 2), dtype=np.int64)
        edge_tris[:, 0] = owners[first]
        shared = counts == 2
        edge_tris[shared, 1] = owners[first[shared] + 1]
        self.edge_tris = _frozen(edge_tris)

        p0 = self.vertices[edges[:, 0]]
        p1 = self.vertices[edges[:, 1]]
        tangent = p1 - p0
        lengths = np.linalg.norm(tangent, axis=1)
        normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]
        centroids = self.vertices[tri].mean(axis=1)

        interior = np.flatnonzero(shared)
        k1 = edge_tris[interior, 0]
        k2 = edge_tris[interior, 1]
        n_int = normals[interior]
        sign = np.sign(np.einsum("ij,ij->i", centroids[k2] - centroids[k1], n_int))
        self.interior_faces = FaceSet(
            edges=_frozen(interior),
            vertices=_frozen(edges[interior]),
            left=_frozen(k1),
            right=_frozen(k2),
            normals=_frozen(n_int * sign[:, None]),
            lengths=_frozen(lengths[interior]),
        )

        boundary = np.flatnonzero(~shared)
        owner = edge_tris[boundary, 0]
        midpoints = 0.5 * (p0[boundary] + p1[boundary])
        n_bnd = normals[boundary]
        sign = np.sign(np.einsum("ij,ij->i", midpoints - centroids[owner], n_bnd))
        self.boundary_faces = FaceSet(
            edges=_frozen(boundary),
            vertices=_frozen(edges[boundary]),
            left=_frozen(owner),
            right=_frozen(-np.ones_like(owner)),
            normals=_frozen(n_bnd * sign[:, None]),
            lengths=_frozen(lengths[boundary]),
        )

        self.edge_lengths = _frozen(lengths)
        self.diameters = _frozen(lengths[self.tri_edges].max(axis=1))
        self.areas = _frozen(self._signed_areas(self.vertices, tri))
        self.h = float(self.diameters.max())

        boundary_vertices = np.unique(edges[boundary])
        self.boundary_vertices = _frozen(boundary_vertices)

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def area(self) -> float:
        """Total area of the triangulation."""
        return float(self.areas.sum())

    def boundary_polygon_area(self) -> float:
        """Area enclosed by the boundary edges (shoelace over oriented boundary faces)."""
        faces = self.boundary_faces
        p0 = self.vertices[faces.vertices[:, 0]]
        p1 = self.vertices[faces.vertices[:, 1]]
        # orient each boundary edge counterclockwise (outward normal on the right)
        tangent = p1 - p0
        ccw = (tangent[:, 0] * faces.normals[:, 1] - tangent[:, 1] * faces.normals[:, 0]) < 0
        a = np.where(ccw[:, None], p0, p1)
        b = np.where(ccw[:, None], p1, p0)
        return float(0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

    def quality(self) -> float:
        """Largest ratio of element diameter to inradius."""
        perimeters = self.edge_lengths[self.tri_edges].sum(axis=1)
        inradius = 2.0 * self.areas / perimeters
        return float(np.max(self.diameters / inradius))

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def euler_characteristic(self) -> int:
        """V - E + (T + 1); equals 2 for a connected planar mesh without holes."""
        return self.num_vertices - self.num_edges + self.num_triangles + 1

    def jacobians(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Affine maps x = x0 + J xi per element: returns (x0, J, J^{-1})."""
        p = self.vertices[self.triangles]
        x0 = p[:, 0, :]
        jac = np.stack([p[:, 1, :] - x0, p[:, 2, :] - x0], axis=2)
        return x0, jac, np.linalg.inv(jac)

    def edges_on_segment(self, start: Point, end: Point, tol: float = 1e-12) -> np.ndarray:
        """
        Return the edges whose union is the straight segment [start, end].

        Raises:
            MeshError: If the segment is not a union of mesh edges
        """
        a = np.asarray(start, dtype=float)
        b = np.asarray(end, dtype=float)
        direction = b - a
        length = float(np.linalg.norm(direction))
        unit = direction / length
        normal = np.array([-unit[1], unit[0]])

        rel = self.vertices - a
        off_line = np.abs(rel @ normal) <= tol * max(1.0, length)
        along = rel @ unit / length
        inside = off_line & (along >= -tol) & (along <= 1 + tol)

        on_segment = np.flatnonzero(inside[self.edges[:, 0]] & inside[self.edges[:, 1]])
        covered = np.linalg.norm(
            self.vertices[self.edges[on_segment, 1]] - self.vertices[self.edges[on_segment, 0]],
            axis=1).sum()
        if abs(covered - length) > 1e-10 * length:
            raise MeshError(
                f"Segment {tuple(a)} -> {tuple(b)} is not mesh-aligned "
                f"(edges cover {covered:.6g} of {length:.6g})")
        return on_segment

    def validate(self, max_quality: Optional[float] = None) -> None:
        """
        Check the mesh invariants.

        Raises:
            MeshError: If any invariant is violated
        """
        counts = (self.edge_tris >= 0).sum(axis=1)
        if np.any(counts < 1):
            raise MeshError("Edge without an adjacent triangle")
        if np.any(self.areas <= 0):
            raise MeshError("Triangle with non-positive area")
        if self.euler_characteristic() != 2:
            raise MeshError(f"Euler relation violated: V - E + T + 1 = {self.euler_characteristic()}")
        polygon = self.boundary_polygon_area()
        if abs(self.area() - polygon) > 1e-12 * abs(polygon):
            raise MeshError(f"Element areas {self.area()!r} differ from polygon area {polygon!r}")
        if max_quality is not None and self.quality() > max_quality:
            raise MeshError(f"Mesh quality {self.quality():.3f} exceeds {max_quality}")
        if self.shape is not None:
            for start, end in self.shape.mesh_lines:
                self.edges_on_segment(start, end)

    def to_text(self) -> str:
        """Serialize to the plain-text format used by the mesh cache."""
        lines = [f"vertices {self.num_vertices} / triangles {self.num_triangles}"]
        lines.extend(f"{x!r} {y!r}" for x, y in self.vertices.tolist())
        lines.extend(f"{i} {j} {k}" for i, j, k in self.triangles.tolist())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, shape: Optional[DomainShape] = None) -> "Mesh":
        """Parse the plain-text format written by :meth:`to_text`."""
        rows = [line for line in text.splitlines() if line.strip()]
        try:
            header = rows[0].split()
            num_vertices = int(header[1])
            num_triangles = int(header[4])
            if header[0] != "vertices" or header[3] != "triangles":
                raise ValueError(rows[0])
            vertices = np.array([[float(v) for v in row.split()] for row in rows[1:1 + num_vertices]])
            triangles = np.array([[int(v) for v in row.split()]
                                  for row in rows[1 + num_vertices:1 + num_vertices + num_triangles]])
        except (IndexError, ValueError) as e:
            raise MeshError(f"Malformed mesh text: {e}") from e
        if vertices.shape != (num_vertices, 2) or triangles.shape != (num_triangles, 3):
            raise MeshError("Mesh text does not match its header counts")
        return cls(vertices, triangles, shape=shape)


def _rectangle_mesh(shape: DomainShape, n: int) -> Mesh:
    a, b, c, d = shape.bounds
    xs = np.linspace(a, b, n + 1)
    ys = np.linspace(c, d, n + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (i + j * (n + 1)).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, triangles, shape=shape)


def _disk_mesh(shape: DomainShape, n: int) -> Mesh:
    sectors = shape.sectors

    def ring_start(k: int) -> int:
        return 0 if k == 0 else 1 + sectors * (k - 1) * k // 2

    def ring_index(k: int, j: int) -> int:
        return 0 if k == 0 else ring_start(k) + j % (sectors * k)

    points = [(0.0, 0.0)]
    for k in range(1, n + 1):
        radius = k / n
        count = sectors * k
        for j in range(count):
            if 2 * j == count:
                points.append((-radius, 0.0))
            elif j == 0:
                points.append((radius, 0.0))
            else:
                theta = 2.0 * math.pi * j / count
                points.append((radius * math.cos(theta), radius * math.sin(theta)))

    triangles = []
    for s in range(sectors):
        triangles.append((0, ring_index(1, s), ring_index(1, s + 1)))
    for k in range(1, n):
        for s in range(sectors):
            inner = [ring_index(k, s * k + t) for t in range(k + 1)]
            outer = [ring_index(k + 1, s * (k + 1) + t) for t in range(k + 2)]
            ia, ib = 0, 0
            while ia < k or ib < k + 1:
                advance_inner = ia < k and (ib == k + 1 or (ia + 1) * (k + 1) < (ib + 1) * k)
                if advance_inner:
                    triangles.append((inner[ia], outer[ib], inner[ia + 1]))
                    ia += 1
                else:
                    triangles.append((inner[ia], outer[ib], outer[ib + 1]))
                    ib += 1
    return Mesh(np.array(points), np.array(triangles), shape=shape)


def generate(shape: DomainShape, n: int) -> Mesh:
    """
    Generate a conforming quasi-uniform mesh of ``shape``.

    Args:
        shape: Domain description
        n: Subdivision count (cells per side for rectangles, rings for the disk)

    Returns:
        Mesh: The triangulation

    Raises:
        MeshError: If n < 1
    """
    if int(n) != n or n < 1:
        raise MeshError(f"Subdivision count must be a positive integer, got {n}")
    n = int(n)
    mesh = _rectangle_mesh(shape, n) if shape.kind == "rectangle" else _disk_mesh(shape, n)
    logger.debug(f"Generated {shape.label} mesh with n={n}: {mesh}")
    return mesh


def refine(mesh: Mesh) -> Mesh:
    """
    Uniform red refinement: each triangle is split into four.

    Children of parent element k are elements 4k .. 4k+3 of the result.
    On disk meshes the midpoints of boundary edges are projected onto the
    unit circle.
    """
    num_vertices = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    if mesh.shape is not None and mesh.shape.kind == "disk":
        on_boundary = mesh.boundary_faces.edges
        midpoints[on_boundary] = mesh.shape.project_boundary(midpoints[on_boundary])
    vertices = np.vstack([mesh.vertices, midpoints])

    t = mesh.triangles
    m = mesh.tri_edges + num_vertices
    children = np.stack([
        np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ], axis=1).reshape(-1, 3)
    parents = np.repeat(np.arange(mesh.num_triangles), 4)
    refined = Mesh(vertices, children, shape=mesh.shape, parents=parents)
    logger.debug(f"Refined {mesh} -> {refined}")
    return refined


def refinement_sequence(shape: DomainShape, n_min: int, levels: int) -> Sequence[Mesh]:
    """Return ``levels`` meshes: generate(shape, n_min) and its successive refinements."""
    if levels < 1:
        raise MeshError(f"At least one mesh level is required, got {levels}")
    meshes = [generate(shape, n_min)]
    for _ in range(levels - 1):
        meshes.append(refine(meshes[-1]))
    return meshes


def classify_points(indicator: SubdomainIndicator, points: np.ndarray) -> np.ndarray:
    """
    Membership mask of ``points`` (shape (N, 2)) in the subdomain.

    Args:
        indicator: Subdomain predicate
        points: 2D points inside the domain

    Returns:
        np.ndarray: Boolean mask of length N
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.asarray(indicator(points[:, 0], points[:, 1]), dtype=bool)
