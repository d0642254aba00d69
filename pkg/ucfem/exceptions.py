"""Exception hierarchy shared by the solver stack and the experiment runner."""


class UcfemError(Exception):
    """Base class for all package errors."""


class MeshError(UcfemError, ValueError):
    """Invalid mesh input or a violated mesh invariant."""


class SpaceError(UcfemError, ValueError):
    """Invalid finite element space usage (bad order, index, sample)."""


class AssemblyError(UcfemError, ValueError):
    """A form cannot be assembled on the given spaces or data."""


class ParameterError(UcfemError, ValueError):
    """Stabilization parameters that leave the system degenerate."""


class FactorizationError(UcfemError, RuntimeError):
    """Sparse LU factorization failed."""


class ConvergenceError(UcfemError, RuntimeError):
    """An iteration hit its cap before reaching the requested tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ProblemError(UcfemError, KeyError):
    """Unknown or inconsistent problem definition."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class OutputError(UcfemError, OSError):
    """Experiment artifacts cannot be written."""


class AnalysisError(UcfemError, ValueError):
    """Error records that cannot be analysed (too few levels, unordered h)."""
