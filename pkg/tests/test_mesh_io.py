import numpy as np
import pytest

from steklov_lab.modules.errors import ArgumentError, PartitionError
from steklov_lab.preprocessing.mesh_io import load_mesh, mesh_from_document, mesh_to_document, save_mesh


@pytest.mark.parametrize("suffix", [".json", ".yaml"])
def test_saved_mesh_loads_back(rectangle, tmp_path, suffix):
    path = save_mesh(rectangle, tmp_path / f"mesh{suffix}")
    mesh = load_mesh(path)
    assert mesh.family == "rectangle"
    assert np.array_equal(mesh.vertices, rectangle.vertices)
    assert np.array_equal(mesh.triangles, rectangle.triangles)
    assert list(mesh.edge_tags) == list(rectangle.edge_tags)


def test_document_errors(triangle_mesh):
    doc = mesh_to_document(triangle_mesh)
    with pytest.raises(ArgumentError):
        mesh_from_document({k: v for k, v in doc.items() if k != "boundary"})
    with pytest.raises(ArgumentError):
        mesh_from_document({**doc, "boundary": [[0, 1]] * 3})
    with pytest.raises(PartitionError):
        mesh_from_document({**doc, "boundary": [[0, 1, "S"], [1, 2, "S"], [2, 0, "X"]]})
