"""Triangle meshes for the disc and the square, with the few finite-element
ingredients the solvers need: per-triangle hat-function gradients, areas,
stiffness and lumped-mass assembly, and red refinement."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidMeshError

#: triangles with area below this fraction of the mean are rejected
DEGENERATE_AREA = 1e-14


@dataclass
class Mesh:
    """Conforming triangle mesh with positively oriented triangles.

    ``nodes`` is (N, 2), ``triangles`` (T, 3) with counterclockwise vertex
    order, ``boundary`` a (N,) bool mask. Per-triangle areas and hat-function
    gradients are computed once at construction.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    areas: np.ndarray = field(init=False)
    hat_grads: np.ndarray = field(init=False)  # (T, 3, 2)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise InvalidMeshError(f"nodes must be (N, 2), got {self.nodes.shape}")
        if not np.isfinite(self.nodes).all():
            raise InvalidMeshError("non-finite node coordinates")
        if self.boundary.shape != (len(self.nodes),):
            raise InvalidMeshError("boundary mask length mismatch")
        p = self.nodes[self.triangles]  # (T, 3, 2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        twice = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.areas = 0.5 * twice
        if len(self.areas) == 0:
            raise InvalidMeshError("mesh has no triangles")
        if np.any(self.areas <= DEGENERATE_AREA * max(np.mean(np.abs(self.areas)), 1e-300)):
            raise InvalidMeshError("degenerate or negatively oriented triangle")
        # rows of inv([e1 e2])^T are grad(lambda_1), grad(lambda_2)
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / twice[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / twice[:, None]
        self.hat_grads = np.stack([-g1 - g2, g1, g2], axis=1)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def interior(self):
        return ~self.boundary

    @property
    def h(self):
        """Longest edge length over the mesh."""
        p = self.nodes[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.sqrt(np.max(np.sum(e * e, axis=-1))))

    def gradients(self, values):
        """Per-triangle gradient of the PL interpolant of nodal ``values``.

        ``values`` is (N,) or (N, n); the result is (T, n, 2).
        """
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.n_nodes:
            raise InvalidMeshError("value count does not match node count")
        # sum_i values[tri_i] (x) hat_grads_i
        return np.einsum("tin,tid->tnd", v[self.triangles], self.hat_grads)


def unit_square_mesh(m):
    """Uniform mesh of [0, 1]^2: (m+1)^2 nodes, each cell split along the
    lower-left to upper-right diagonal."""
    if m < 1:
        raise InvalidMeshError("need at least one cell per side")
    s = np.linspace(0.0, 1.0, m + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def idx(i, j):
        return j * (m + 1) + i

    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    a = idx(i, j).ravel()
    b = idx(i + 1, j).ravel()
    c = idx(i + 1, j + 1).ravel()
    d = idx(i, j + 1).ravel()
    tris = np.concatenate(
        [np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)]
    )
    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="xy")
    boundary = ((ii == 0) | (ii == m) | (jj == 0) | (jj == m)).ravel()
    return Mesh(nodes, tris, boundary)


def disc_mesh(rings, segments=None):
    """Structured polar mesh of the unit disc.

    Node 0 is the center; ring k (1-based, radius k/rings) holds ``segments``
    equally spaced nodes starting at angle 0, indexed
    1 + (k-1)*segments + j. ``segments`` defaults to 6*rings so cells near
    the boundary are roughly isotropic; boundary nodes are exactly on the
    unit circle.
    """
    if rings < 1:
        raise InvalidMeshError("need at least one ring")
    nt = 6 * rings if segments is None else int(segments)
    if nt < 3:
        raise InvalidMeshError("need at least three segments")
    theta = 2.0 * np.pi * np.arange(nt) / nt
    nodes = [np.zeros((1, 2))]
    for k in range(1, rings + 1):
        r = k / rings
        nodes.append(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1))
    nodes = np.concatenate(nodes)

    def ring_idx(k, j):
        return 1 + (k - 1) * nt + j % nt

    tris = []
    j = np.arange(nt)
    tris.append(np.stack([np.zeros(nt, int), ring_idx(1, j), ring_idx(1, j + 1)], axis=1))
    for k in range(1, rings):
        a, b = ring_idx(k, j), ring_idx(k, j + 1)
        c, d = ring_idx(k + 1, j + 1), ring_idx(k + 1, j)
        tris.append(np.stack([a, d, c], axis=1))
        tris.append(np.stack([a, c, b], axis=1))
    tris = np.concatenate(tris)
    boundary = np.zeros(len(nodes), dtype=bool)
    boundary[ring_idx(rings, j)] = True
    return Mesh(nodes, tris, boundary)


def boundary_edges(mesh):
    """Edges (as sorted node pairs) that belong to exactly one triangle."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq[counts == 1]


def refine(mesh, boundary_project=None):
    """Red refinement: split every triangle into four via edge midpoints.

    Midpoints of boundary edges are flagged as boundary nodes; if
    ``boundary_project`` is given, it is applied to the new boundary node
    coordinates (e.g. to snap them back onto a curved boundary).
    """
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    mid = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    mid_id = mesh.n_nodes + np.arange(len(uniq))
    on_boundary = counts == 1
    if boundary_project is not None and on_boundary.any():
        mid = mid.copy()
        mid[on_boundary] = boundary_project(mid[on_boundary])
    nodes = np.concatenate([mesh.nodes, mid])
    boundary = np.concatenate([mesh.boundary, on_boundary])

    T = len(t)
    m01 = mid_id[inverse[:T]]
    m12 = mid_id[inverse[T : 2 * T]]
    m20 = mid_id[inverse[2 * T :]]
    tris = np.concatenate(
        [
            np.stack([t[:, 0], m01, m20], axis=1),
            np.stack([m01, t[:, 1], m12], axis=1),
            np.stack([m20, m12, t[:, 2]], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return Mesh(nodes, tris, boundary)


def submesh(mesh, tri_mask):
    """Mesh restricted to the selected triangles.

    Nodes are renumbered compactly; the boundary mask is recomputed from the
    restricted connectivity (nodes of edges used by exactly one kept
    triangle). Returns ``(sub, node_ids)`` where ``node_ids`` maps sub-mesh
    node indices back to the parent mesh.
    """
    tri_mask = np.asarray(tri_mask, dtype=bool)
    if tri_mask.shape != (len(mesh.triangles),):
        raise InvalidMeshError("triangle mask length mismatch")
    if not tri_mask.any():
        raise InvalidMeshError("empty triangle selection")
    kept = mesh.triangles[tri_mask]
    node_ids = np.unique(kept)
    remap = np.full(mesh.n_nodes, -1, dtype=np.int64)
    remap[node_ids] = np.arange(len(node_ids))
    tris = remap[kept]
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    boundary = np.zeros(len(node_ids), dtype=bool)
    boundary[uniq[counts == 1].ravel()] = True
    return Mesh(mesh.nodes[node_ids], tris, boundary), node_ids


def stiffness_matrix(mesh):
    """FEM stiffness matrix of the Laplacian on PL elements (CSR, N x N)."""
    g = mesh.hat_grads  # (T, 3, 2)
    local = np.einsum("tid,tjd->tij", g, g) * mesh.areas[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    K = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )
    return K.tocsr()


def lumped_mass(mesh):
    """Row-sum (lumped) mass vector: one third of the adjacent triangle area
    per node."""
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return m


def harmonic_extension(mesh, boundary_values):
    """Nodal field equal to ``boundary_values`` on the boundary and discretely
    harmonic inside (one sparse solve per component)."""
    bv = np.asarray(boundary_values, dtype=float)
    if bv.ndim == 1:
        bv = bv[:, None]
    if bv.shape[0] != int(np.sum(mesh.boundary)):
        raise InvalidMeshError("boundary value count does not match boundary nodes")
    K = stiffness_matrix(mesh)
    full = np.zeros((mesh.n_nodes, bv.shape[1]))
    full[mesh.boundary] = bv
    ii = np.flatnonzero(mesh.interior)
    if len(ii):
        rhs = -K[ii][:, mesh.boundary] @ bv
        sol = sp.linalg.spsolve(K[ii][:, ii].tocsc(), rhs)
        full[ii] = sol.reshape(len(ii), bv.shape[1])
    return full
