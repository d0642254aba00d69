import hashlib
import logging

import numpy as np
import pytest

from ucfem.exceptions import OutputError
from ucfem.fem.mesh import generate
from ucfem.services.mesh_cache_service import MeshCacheService
from ucfem.utils.file_utils import (
    atomic_write_text,
    ensure_directory,
    get_text_hash,
    load_flat_config,
    safe_remove,
)
from ucfem.utils.logger import get_logger


class TestFileUtils:
    def test_atomic_write(self, tmp_path):
        path = atomic_write_text(tmp_path / "nested" / "a.txt", "x,y\n1,2\n")
        assert path.read_text() == "x,y\n1,2\n"
        assert [p.name for p in path.parent.iterdir()] == ["a.txt"]

    def test_text_hash(self):
        assert get_text_hash("hello") == hashlib.sha256(b"hello").hexdigest()

    def test_ensure_directory_on_file(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OutputError):
            ensure_directory(blocker / "sub")

    def test_safe_remove(self, tmp_path):
        directory = ensure_directory(tmp_path / "d")
        (directory / "f").write_text("1")
        assert safe_remove(directory)
        assert not directory.exists()

    def test_flat_config(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("perturb-q: 0.1\nn-min: 4\neta: inf\n")
        assert load_flat_config(path) == {"perturb_q": 0.1, "n_min": 4, "eta": "inf"}

    def test_flat_config_rejects_list(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError):
            load_flat_config(path)


class TestMeshCache:
    def test_store_and_load(self, tmp_path, disk):
        cache = MeshCacheService(cache_dir=str(tmp_path), enabled=True)
        mesh = generate(disk, 2)
        cache.store(disk, 2, 0, mesh)

        loaded = cache.load(disk, 2, 0)
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        assert cache.load(disk, 2, 1) is None

    def test_corrupt_file_is_discarded(self, tmp_path, unit_square):
        cache = MeshCacheService(cache_dir=str(tmp_path), enabled=True)
        path = tmp_path / cache.object_name(unit_square, 2, 0)
        path.write_text("garbage\n")

        assert cache.load(unit_square, 2, 0) is None
        assert not path.exists()

    def test_partial_sequence_is_regenerated(self, tmp_path, unit_square):
        cache = MeshCacheService(cache_dir=str(tmp_path), enabled=True)
        cache.store(unit_square, 2, 0, generate(unit_square, 2))

        meshes = cache.sequence(unit_square, 2, 3)
        assert all(mesh.parents is not None for mesh in meshes[1:])
        assert cache.clear() == 3

    def test_disabled_cache_writes_nothing(self, tmp_path, unit_square):
        cache = MeshCacheService(cache_dir=str(tmp_path / "cache"), enabled=False)
        assert len(cache.sequence(unit_square, 2, 2)) == 2
        assert not (tmp_path / "cache").exists()


def test_logger_does_not_propagate():
    logger = get_logger("ucfem.test")
    assert isinstance(logger, logging.Logger)
    assert logger.propagate is False
