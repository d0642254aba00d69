"""Meshes, Lagrange spaces and the forms of the stabilized method."""
from ucfem.fem.element import LagrangeElement, Quadrature, lagrange_element, line_quadrature, triangle_quadrature
from ucfem.fem.mesh import DomainShape, FaceSet, Mesh, SubdomainIndicator, classify_points, generate, refine
from ucfem.fem.space import (
    ElementData,
    ElementField,
    FeFunction,
    FeSpace,
    elementwise_schrodinger,
    evaluate,
    l2_project_onto_constrained,
    nodal_interpolate,
    prolongate,
)

__all__ = [
    # Mesh
    "DomainShape",
    "FaceSet",
    "Mesh",
    "SubdomainIndicator",
    "classify_points",
    "generate",
    "refine",
    # Element
    "LagrangeElement",
    "Quadrature",
    "lagrange_element",
    "line_quadrature",
    "triangle_quadrature",
    # Space
    "ElementData",
    "ElementField",
    "FeFunction",
    "FeSpace",
    "elementwise_schrodinger",
    "evaluate",
    "l2_project_onto_constrained",
    "nodal_interpolate",
    "prolongate",
]
