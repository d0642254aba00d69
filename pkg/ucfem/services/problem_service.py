"""Service for the built-in problem library."""
import math
from typing import Callable, Dict, List, Tuple

import numpy as np

from ucfem.config import BUILTIN_PROBLEMS, settings
from ucfem.exceptions import ProblemError
from ucfem.fem.mesh import DomainShape, SubdomainIndicator
from ucfem.models.problem import ExactSolution, LineSource, ProblemSpec
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)

PI = math.pi


def _kink(x, y):
    return np.where(y > 0, -y, 0.0)


def _kink_gradient(x, y):
    return 0.0, np.where(y > 0, -1.0, 0.0)


def _disk_kink() -> ProblemSpec:
    exact = ExactSolution(_kink, _kink_gradient)
    return ProblemSpec(
        name="disk-kink",
        shape=DomainShape.unit_disk(settings.disk_sectors),
        omega=SubdomainIndicator("omega", lambda x, y: (x > 0) & (x * x + y * y > 0.25)),
        target=SubdomainIndicator("B", lambda x, y: (x > 0) & (x * x + y * y > 0.0625)),
        datum=_kink,
        source=LineSource((-1.0, 0.0), (1.0, 0.0)),
        exact=exact,
        s_reg=1.49,
        description=BUILTIN_PROBLEMS["disk-kink"],
    )


def _log_potential(x, y):
    return 10.0 * np.log(y + 0.5)


def _hadamard_solution(x, y):
    return np.sin(x) * np.sinh(y)


def _hadamard_gradient(x, y):
    return np.cos(x) * np.sinh(y), np.sin(x) * np.cosh(y)


def _hadamard(name: str, omega: Callable, target: Callable) -> ProblemSpec:
    return ProblemSpec(
        name=name,
        shape=DomainShape.rectangle(0.0, PI, 0.0, 1.0),
        omega=SubdomainIndicator("omega", omega),
        target=SubdomainIndicator("B", target),
        datum=_hadamard_solution,
        potential=_log_potential,
        source=lambda x, y: _log_potential(x, y) * _hadamard_solution(x, y),
        exact=ExactSolution(_hadamard_solution, _hadamard_gradient),
        description=BUILTIN_PROBLEMS[name],
    )


def _in_box(x, y, x0, x1, y0, y1, closed: bool = False):
    if closed:
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    return (x > x0) & (x < x1) & (y > y0) & (y < y1)


def _hadamard_conv() -> ProblemSpec:
    return _hadamard(
        "hadamard-conv",
        lambda x, y: ~_in_box(x, y, PI / 4, 3 * PI / 4, 0.05, 1.0, closed=True),
        lambda x, y: ~_in_box(x, y, PI / 4, 3 * PI / 4, 0.75, 1.0, closed=True),
    )


def _hadamard_nonconv() -> ProblemSpec:
    return _hadamard(
        "hadamard-nonconv",
        lambda x, y: _in_box(x, y, PI / 4, 3 * PI / 4, 0.05, 0.5),
        lambda x, y: _in_box(x, y, PI / 8, 7 * PI / 8, 0.05, 0.75),
    )


def _smoke_harmonic() -> ProblemSpec:
    return ProblemSpec(
        name="smoke-harmonic",
        shape=DomainShape.rectangle(0.0, 1.0, 0.0, 1.0),
        omega=SubdomainIndicator("omega", lambda x, y: x > 0.5),
        target=SubdomainIndicator("B", lambda x, y: _in_box(x, y, 0.25, 0.75, 0.25, 0.75)),
        datum=lambda x, y: x * y,
        exact=ExactSolution(lambda x, y: x * y, lambda x, y: (y, x)),
        description=BUILTIN_PROBLEMS["smoke-harmonic"],
    )


_FACTORIES: Dict[str, Callable[[], ProblemSpec]] = {
    "disk-kink": _disk_kink,
    "hadamard-conv": _hadamard_conv,
    "hadamard-nonconv": _hadamard_nonconv,
    "smoke-harmonic": _smoke_harmonic,
}


class ProblemService:
    """Service class for looking up built-in problems and their mesh levels."""

    def get(self, name: str) -> ProblemSpec:
        """
        Get a built-in problem by name.

        Raises:
            ProblemError: If the name is unknown
        """
        if name not in _FACTORIES:
            logger.error(f"Unknown problem '{name}'")
            raise ProblemError(f"Unknown problem '{name}'; expected one of {sorted(_FACTORIES)}")
        problem = _FACTORIES[name]()
        problem.check_consistency()
        return problem

    def list(self) -> List[Tuple[str, str]]:
        return sorted(BUILTIN_PROBLEMS.items())

    def default_levels(self, problem: ProblemSpec, order: int) -> Tuple[int, int]:
        """(n_min, number of meshes); order 3 stops one level earlier."""
        if problem.shape.kind == "disk":
            n_min, levels = settings.disk_n_min, settings.disk_levels
        else:
            n_min, levels = settings.rectangle_n_min, settings.rectangle_levels
        if order >= 3:
            levels -= 1
        return n_min, levels

    def regularity(self, problem: ProblemSpec, order: int) -> float:
        """Regularity index s: the problem's own value, else p + 1 for smooth solutions."""
        return problem.s_reg if problem.s_reg is not None else float(order + 1)


# Global problem service instance
problem_service = ProblemService()


def builtin_problem(name: str) -> ProblemSpec:
    """Shortcut for :meth:`ProblemService.get`."""
    return problem_service.get(name)
