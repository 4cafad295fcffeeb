"""Versioned JSON/CSV serialization for meshes, maps, grids, and reports.

Every document carries a ``schema`` tag. JSON is emitted with sorted keys
and fixed separators so identical inputs produce byte-identical files.
"""

import csv
import io
import json

import numpy as np

from .beltrami import ComplexGrid
from .errors import InvalidInputError
from .graphsolve import DiscreteMap
from .mesh import Mesh

MESH_SCHEMA = "minsurf/mesh@1"
MAP_SCHEMA = "minsurf/discrete-map@1"
GRID_SCHEMA = "minsurf/complex-grid@1"


def dumps(doc):
    """Deterministic JSON text for a report/document dict."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def dump_json(doc, path):
    with open(path, "w") as fh:
        fh.write(dumps(doc))
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def expect_schema(doc, schema):
    if doc.get("schema") != schema:
        raise InvalidInputError(
            f"expected schema {schema!r}, got {doc.get('schema')!r}"
        )


def mesh_to_dict(mesh):
    return {
        "schema": MESH_SCHEMA,
        "nodes": mesh.nodes.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary": mesh.boundary.astype(int).tolist(),
    }


def mesh_from_dict(doc):
    expect_schema(doc, MESH_SCHEMA)
    return Mesh(
        np.asarray(doc["nodes"], dtype=float),
        np.asarray(doc["triangles"], dtype=np.int64),
        np.asarray(doc["boundary"], dtype=bool),
    )


def map_to_dict(u):
    return {
        "schema": MAP_SCHEMA,
        "mesh": mesh_to_dict(u.mesh),
        "values": u.values.tolist(),
        "codim": u.codim,
    }


def map_from_dict(doc):
    expect_schema(doc, MAP_SCHEMA)
    return DiscreteMap(
        mesh_from_dict(doc["mesh"]), np.asarray(doc["values"], dtype=float)
    )


def grid_to_dict(grid):
    return {
        "schema": GRID_SCHEMA,
        "n": grid.n,
        "half_width": grid.half_width,
        "real": grid.values.real.tolist(),
        "imag": grid.values.imag.tolist(),
    }


def grid_from_dict(doc):
    expect_schema(doc, GRID_SCHEMA)
    v = np.asarray(doc["real"], dtype=float) + 1j * np.asarray(doc["imag"], dtype=float)
    return ComplexGrid(v, doc["half_width"])


def csv_text(header, rows):
    """Deterministic CSV text (\\n line endings, repr-stable floats)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(x, ".17g") if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def dump_csv(header, rows, path):
    with open(path, "w") as fh:
        fh.write(csv_text(header, rows))
