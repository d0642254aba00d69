"""
Stabilized primal-dual finite elements for unique continuation of -Delta + P
"""

__version__ = "1.0.0"

from ucfem.config import settings

__all__ = ["settings", "__version__"]
