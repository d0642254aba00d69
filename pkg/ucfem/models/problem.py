"""
Problem definitions for the unique continuation solver.

A problem bundles the domain, the data set omega, the target set B, the
potential P, the source f (an L^2 density or a line measure), the datum q
on omega, an optional exact solution and optional data perturbations.
These hold callables and numpy data, so they are frozen dataclasses rather
than pydantic models.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np

from ucfem.exceptions import ProblemError
from ucfem.fem.mesh import DomainShape, Point, SubdomainIndicator

PointFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradientFunction = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

PERTURBATION_MODES = ("noise", "constant", "dominant")


@dataclass(frozen=True)
class ExactSolution:
    """Exact solution u with its gradient."""

    value: PointFunction
    gradient: GradientFunction

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.value(x, y)


@dataclass(frozen=True)
class LineSource:
    """Line measure <f, w> = int_segment density * w ds on a mesh-aligned segment."""

    start: Point = (-1.0, 0.0)
    end: Point = (1.0, 0.0)
    density: Optional[PointFunction] = field(default=None, compare=False)


@dataclass(frozen=True)
class Perturbation:
    """
    Data perturbation of the right-hand side.

    In ``noise`` mode delta q is seeded nodal noise on V_h^p scaled to the
    L^2(omega) amplitude and delta f is seeded nodal noise on W_h^p scaled to
    the L^2(Omega) amplitude. In ``constant`` mode both are constant offsets
    of the given amplitude. In ``dominant`` mode delta q is the direction on
    omega that the discrete system amplifies most (see
    :meth:`SolverService.dominant_data_perturbation`), and delta f is noise.
    """

    q_amplitude: float = 0.0
    f_amplitude: float = 0.0
    mode: str = "noise"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PERTURBATION_MODES:
            raise ProblemError(f"Unknown perturbation mode '{self.mode}'; expected one of {PERTURBATION_MODES}")
        if self.q_amplitude < 0 or self.f_amplitude < 0:
            raise ProblemError("Perturbation amplitudes must be non-negative")

    @property
    def active(self) -> bool:
        return bool(self.q_amplitude or self.f_amplitude)

    def scaled(self, factor: float) -> "Perturbation":
        return replace(self, q_amplitude=factor * self.q_amplitude, f_amplitude=factor * self.f_amplitude)


Source = Union[PointFunction, LineSource, None]


@dataclass(frozen=True)
class ProblemSpec:
    """Unique continuation problem -Delta u + P u = f in Omega, u = q in omega."""

    name: str
    shape: DomainShape
    omega: SubdomainIndicator
    target: SubdomainIndicator
    datum: PointFunction
    potential: Optional[PointFunction] = None
    source: Source = None
    exact: Optional[ExactSolution] = None
    s_reg: Optional[float] = None
    perturbation: Perturbation = field(default_factory=Perturbation)
    description: str = ""

    @property
    def has_line_source(self) -> bool:
        return isinstance(self.source, LineSource)

    def potential_or_zero(self) -> PointFunction:
        if self.potential is not None:
            return self.potential
        return lambda x, y: np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def with_perturbation(self, perturbation: Perturbation) -> "ProblemSpec":
        return replace(self, perturbation=perturbation)

    def scaled(self, factor: float) -> "ProblemSpec":
        """Problem with every datum (f, q, perturbations) multiplied by ``factor``."""
        datum = self.datum
        source = self.source
        if isinstance(source, LineSource):
            density = source.density
            new_source: Source = replace(
                source,
                density=(lambda x, y: factor * np.ones_like(x)) if density is None
                else (lambda x, y: factor * density(x, y)))
        elif source is None:
            new_source = None
        else:
            new_source = lambda x, y: factor * source(x, y)  # noqa: E731
        return replace(
            self,
            datum=lambda x, y: factor * datum(x, y),
            source=new_source,
            exact=None,
            perturbation=self.perturbation.scaled(factor),
        )

    def sample_points(self, count: int, inside: SubdomainIndicator, seed: int = 0) -> np.ndarray:
        """Rejection-sample ``count`` points of the domain inside a subdomain."""
        a, b, c, d = self.shape.bounds
        rng = np.random.default_rng(seed)
        found = np.empty((0, 2))
        for _ in range(1000):
            candidates = np.column_stack([rng.uniform(a, b, 4 * count), rng.uniform(c, d, 4 * count)])
            x, y = candidates[:, 0], candidates[:, 1]
            keep = self.shape.contains(x, y) & inside(x, y)
            found = np.vstack([found, candidates[keep]])
            if found.shape[0] >= count:
                return found[:count]
        raise ProblemError(f"Subdomain '{inside.label}' of problem '{self.name}' looks empty")

    def check_consistency(self, count: int = 100, tol: float = 1e-10, seed: int = 0) -> None:
        """
        Check q = exact on omega at sampled points (perturbations excluded).

        Raises:
            ProblemError: If the datum disagrees with the exact solution
        """
        if self.exact is None:
            return
        points = self.sample_points(count, self.omega, seed)
        x, y = points[:, 0], points[:, 1]
        gap = float(np.max(np.abs(np.asarray(self.datum(x, y)) - np.asarray(self.exact(x, y)))))
        if gap > tol:
            raise ProblemError(f"Datum of problem '{self.name}' differs from the exact solution on omega by {gap:.3e}")
