import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp
import yaml

from steklov_lab.modules.errors import ArgumentError
from steklov_lab.modules.geometry import Mesh
from steklov_lab.modules.utils import to_builtin

logger = logging.getLogger(__name__)

'''
Mesh document format (JSON or YAML)
1. vertices: [[x, y], ...]
2. triangles: [[i, j, k], ...] counterclockwise
3. boundary: [[i, j, tag], ...] with tag S or W, domain on the left of i -> j
4. family, params (optional)
'''


def _read_document(file_path):
    path = Path(file_path)
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def mesh_from_document(doc):
    """Build a Mesh from a parsed mesh document."""
    missing = [key for key in ("vertices", "triangles", "boundary") if key not in doc]
    if missing:
        raise ArgumentError(f"mesh document is missing {missing}")
    boundary = doc["boundary"]
    if any(len(row) != 3 for row in boundary):
        raise ArgumentError("boundary rows must be [i, j, tag]")
    return Mesh(
        np.asarray(doc["vertices"], dtype=float),
        np.asarray(doc["triangles"], dtype=np.int64),
        np.asarray([[row[0], row[1]] for row in boundary], dtype=np.int64),
        np.asarray([str(row[2]) for row in boundary]),
        family=doc.get("family", "custom"),
        params=doc.get("params") or {},
    )


def mesh_to_document(mesh):
    return {
        "family": mesh.family,
        "params": dict(mesh.params),
        "vertices": mesh.vertices.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary": [
            [int(i), int(j), str(tag)] for (i, j), tag in zip(mesh.boundary_edges, mesh.edge_tags)
        ],
    }


def load_mesh(file_path):
    """Load a mesh from the specified JSON or YAML file."""
    mesh = mesh_from_document(_read_document(file_path))
    logger.info("loaded %s mesh from %s: %d vertices, %d triangles",
                mesh.family, file_path, mesh.n_vertices, len(mesh.triangles))
    return mesh


def save_mesh(mesh, file_path):
    """Save the mesh to the specified file; the suffix picks JSON or YAML."""
    path = Path(file_path)
    doc = mesh_to_document(mesh)
    with open(path, "w", encoding="utf-8") as f:
        if path.suffix.lower() == ".json":
            json.dump(doc, f)
        else:
            yaml.safe_dump(doc, f, sort_keys=False)
    return path


def export_coo(matrix, file_path):
    """Write a sparse matrix as row,col,value CSV."""
    coo = sp.coo_matrix(matrix)
    df = pd.DataFrame({"row": coo.row, "col": coo.col, "value": coo.data})
    df = df.sort_values(["row", "col"], kind="stable")
    df.to_csv(file_path, index=False, float_format="%.17g")
    return Path(file_path)


def load_coo(file_path, shape=None):
    df = pd.read_csv(file_path)
    if shape is None:
        n = int(max(df["row"].max(), df["col"].max())) + 1 if len(df) else 0
        shape = (n, n)
    return sp.csr_matrix((df["value"].to_numpy(), (df["row"].to_numpy(), df["col"].to_numpy())), shape=shape)


def save_table(df, file_path):
    """Save a report table to the specified CSV file."""
    df.to_csv(file_path, index=False)
    return Path(file_path)


def save_yaml(doc, file_path):
    with open(file_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(to_builtin(doc), f, sort_keys=False)
    return Path(file_path)


def load_yaml(file_path):
    with open(file_path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)
