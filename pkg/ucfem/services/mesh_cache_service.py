"""Service for caching generated mesh sequences as plain-text files."""
from pathlib import Path
from typing import List, Optional

from ucfem.config import settings
from ucfem.exceptions import MeshError, OutputError
from ucfem.fem.mesh import DomainShape, Mesh, refinement_sequence
from ucfem.utils.file_utils import atomic_write_text, ensure_directory, get_text_hash, safe_remove
from ucfem.utils.logger import get_logger

logger = get_logger(__name__)


class MeshCacheService:
    """Service class for the on-disk mesh cache."""

    def __init__(self, cache_dir: Optional[str] = None, enabled: Optional[bool] = None):
        """Initialize the mesh cache (directory created lazily on first write)."""
        self.cache_dir = Path(cache_dir or settings.mesh_cache_dir)
        self.enabled = settings.use_mesh_cache if enabled is None else enabled

    def object_name(self, shape: DomainShape, n: int, level: int) -> str:
        """File name of one cached level: <label hash>_n<n>_l<level>.mesh."""
        return f"{get_text_hash(shape.label)[:12]}_n{n}_l{level}.mesh"

    def load(self, shape: DomainShape, n: int, level: int) -> Optional[Mesh]:
        """Load a cached level, or None if it is missing or unreadable."""
        path = self.cache_dir / self.object_name(shape, n, level)
        if not path.exists():
            return None
        try:
            mesh = Mesh.from_text(path.read_text(encoding="utf-8"), shape=shape)
        except (OSError, MeshError) as e:
            logger.warning(f"Discarding unreadable cached mesh '{path}': {e}")
            safe_remove(path)
            return None
        logger.debug(f"Loaded cached mesh '{path}'")
        return mesh

    def store(self, shape: DomainShape, n: int, level: int, mesh: Mesh) -> Path:
        """
        Write one level to the cache.

        Raises:
            OutputError: If the cache directory is not writable
        """
        ensure_directory(self.cache_dir)
        path = atomic_write_text(self.cache_dir / self.object_name(shape, n, level), mesh.to_text())
        logger.debug(f"Stored mesh level {level} in '{path}'")
        return path

    def sequence(self, shape: DomainShape, n_min: int, levels: int) -> List[Mesh]:
        """
        ``levels`` meshes starting at generate(shape, n_min), cached when enabled.

        A partially cached sequence is regenerated as a whole so that every
        level of a fresh sequence carries its parent map.
        """
        if self.enabled:
            cached = [self.load(shape, n_min, level) for level in range(levels)]
            if all(mesh is not None for mesh in cached):
                logger.info(f"Using {levels} cached mesh levels for {shape.label}, n_min={n_min}")
                return cached

        meshes = list(refinement_sequence(shape, n_min, levels))
        if self.enabled:
            try:
                for level, mesh in enumerate(meshes):
                    self.store(shape, n_min, level, mesh)
            except OutputError:
                logger.warning(f"Mesh cache '{self.cache_dir}' is not writable; continuing without it")
        return meshes

    def clear(self) -> int:
        """Remove every cached mesh file; returns the number removed."""
        if not self.cache_dir.exists():
            return 0
        return sum(1 for path in self.cache_dir.glob("*.mesh") if safe_remove(path))


# Global mesh cache service instance
mesh_cache_service = MeshCacheService()
