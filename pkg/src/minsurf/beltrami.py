"""Quasiconformal factorization u = v o phi via the Beltrami equation.

The induced metric of a Lipschitz graph defines a Beltrami coefficient mu
with |mu| < 1; solving phi_zbar = mu phi_z with a spectral Neumann iteration
on a periodic box gives a quasiconformal change of variables phi, and
v = u o phi^-1 is harmonic when u is area-critical. This module provides the
discrete version of each step plus the weak residuals used to measure how
far a discrete map is from critical / harmonic.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from . import backend
from .errors import (
    ConvergenceError,
    InvalidInputError,
    InvalidMetricError,
    NotInjectiveError,
    OutOfDomainError,
)
from .graphsolve import DiscreteMap, _scatter_rows, dual_norm
from .mesh import Mesh, lumped_mass, refine, stiffness_matrix

#: default periodic box is [-HALF_WIDTH, HALF_WIDTH)^2
HALF_WIDTH = 4.0


@dataclass
class ComplexGrid:
    """Square periodic grid on [-half_width, half_width)^2 with complex
    values; values[j, i] sits at (x_i, y_j)."""

    values: np.ndarray
    half_width: float = HALF_WIDTH

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        n = self.values.shape[0]
        if self.values.shape != (n, n) or n < 2:
            raise InvalidInputError(f"grid values must be square, got {self.values.shape}")
        if self.half_width <= 0:
            raise InvalidInputError("half_width must be positive")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.n

    def axis(self):
        return -self.half_width + self.spacing * np.arange(self.n)

    def meshgrid(self):
        s = self.axis()
        return np.meshgrid(s, s, indexing="xy")

    def zgrid(self):
        X, Y = self.meshgrid()
        return X + 1j * Y

    @classmethod
    def from_function(cls, f, n, half_width=HALF_WIDTH):
        g = cls(np.zeros((n, n), dtype=complex), half_width)
        g.values = np.ascontiguousarray(f(g.zgrid()), dtype=complex)
        return g


def _freq(n, half_width):
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=2.0 * half_width / n)
    kx, ky = np.meshgrid(k, k, indexing="xy")
    return kx + 1j * ky


def wirtinger(grid):
    """Spectral Wirtinger derivatives (f_z, f_zbar) of a periodic grid."""
    w = _freq(grid.n, grid.half_width)
    F = np.fft.fft2(grid.values)
    # d/dz has symbol i*conj(w)/2, d/dzbar has symbol i*w/2
    fz = np.fft.ifft2(0.5j * np.conj(w) * F)
    fzb = np.fft.ifft2(0.5j * w * F)
    return (
        ComplexGrid(fz, grid.half_width),
        ComplexGrid(fzb, grid.half_width),
    )


def _beurling_symbol(n, half_width):
    w = _freq(n, half_width)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.conj(w) / w
    s[0, 0] = 0.0
    return s


def _cauchy_symbol(n, half_width):
    w = _freq(n, half_width)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = 2.0 / (1j * w)
    s[0, 0] = 0.0
    return s


def beltrami_coefficient(E, F, G, tol=1e-9):
    """mu = (E - G + 2iF) / (E + G + 2 sqrt(EG - F^2)) for a metric
    [[E, F], [F, G]] >= id; raises InvalidMetricError when the lower bound
    fails beyond ``tol``."""
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    disc = E * G - F * F
    bad = (E < 1.0 - tol) | (G < 1.0 - tol) | ((E - 1.0) * (G - 1.0) < F * F - tol)
    if np.any(bad & (np.abs(E - 1) + np.abs(G - 1) + np.abs(F) > tol)):
        raise InvalidMetricError("metric violates g >= id beyond tolerance")
    root = np.sqrt(np.maximum(disc, 0.0))
    return (E - G + 2j * F) / (E + G + 2.0 * root)


def metric_of_gradient(Z):
    """(E, F, G) entries of id + Z^T Z for a batch of n x 2 gradients."""
    Z = np.asarray(Z, dtype=float)
    E = 1.0 + np.sum(Z[..., 0] * Z[..., 0], axis=-1)
    G = 1.0 + np.sum(Z[..., 1] * Z[..., 1], axis=-1)
    F = np.sum(Z[..., 0] * Z[..., 1], axis=-1)
    return E, F, G


def plateau_bump(n, sup=0.5, inner=0.15, outer=3.0, power=16, half_width=HALF_WIDTH):
    """Smooth compactly-concentrated test coefficient with |mu| ~ ``sup``
    on a wide annulus: mu = c z^2/(|z|^2 + inner^2) exp(-(|z|/outer)^power).

    Angular mode 2 makes the grid mean vanish by symmetry, which keeps the
    periodic solver's residual floor well below the tolerance.
    """
    g = ComplexGrid.from_function(
        lambda z: z**2 / (np.abs(z) ** 2 + inner**2)
        * np.exp(-((np.abs(z) / outer) ** power)),
        n, half_width,
    )
    g.values *= sup / np.max(np.abs(g.values))
    return g


@dataclass
class GridMap:
    """Solution of the Beltrami equation on a periodic grid.

    phi(z) = z + psi(z) with psi periodic; ``residual`` is the terminal
    relative residual |phi_zbar - mu phi_z|_2 / |phi_z|_2 measured by
    spectral differentiation of psi.
    """

    psi: ComplexGrid
    residual: float
    iterations: int
    contraction: list = field(default_factory=list)
    far_field_deviation: float = 0.0

    def phi_values(self):
        return self.psi.zgrid() + self.psi.values

    def _interpolators(self):
        s = self.psi.axis()
        v = self.psi.values
        kw = dict(method="cubic", bounds_error=False, fill_value=None)
        return (
            RegularGridInterpolator((s, s), v.real.T, **kw),
            RegularGridInterpolator((s, s), v.imag.T, **kw),
        )

    def __call__(self, points):
        """Evaluate phi at complex points (any shape) by cubic interpolation
        of the periodic displacement."""
        z = np.asarray(points, dtype=complex)
        pts = np.stack([z.real.ravel(), z.imag.ravel()], axis=1)
        re, im = self._interpolators()
        psi = re(pts) + 1j * im(pts)
        return (z.ravel() + psi).reshape(z.shape)


def _residual_of(psi_values, mu, half_width):
    g = ComplexGrid(psi_values, half_width)
    fz, fzb = wirtinger(g)
    phi_z = 1.0 + fz.values
    num = np.linalg.norm(fzb.values - mu * phi_z)
    return float(num / np.linalg.norm(phi_z))


def solve_beltrami(mu, tol=1e-3, max_iter=30):
    """Solve phi_zbar = mu phi_z with phi = z + O(1) via Neumann iteration.

    ``mu`` is a ComplexGrid with sup |mu| < 1, compactly supported well
    inside the box. Iterates h <- mu * Beurling(h) + mu (contraction factor
    about sup |mu|), then phi = z + Cauchy(h). Returns a :class:`GridMap`
    whose relative residual is at most ``tol``; raises
    :class:`ConvergenceError` carrying the last iterate otherwise.
    """
    if not isinstance(mu, ComplexGrid):
        raise InvalidInputError("mu must be a ComplexGrid")
    k = float(np.max(np.abs(mu.values)))
    if not np.isfinite(k) or k >= 1.0:
        raise InvalidInputError(f"need sup|mu| < 1, got {k}")
    n, hw = mu.n, mu.half_width
    if n & (n - 1):
        raise InvalidInputError("grid size must be a power of two")
    S = _beurling_symbol(n, hw)
    C = _cauchy_symbol(n, hw)
    m = mu.values

    if k == 0.0:
        gm = GridMap(ComplexGrid(np.zeros((n, n), complex), hw), 0.0, 0)
        return gm

    h = np.zeros((n, n), dtype=complex)
    contraction = []
    prev_inc = None
    residual = np.inf
    for it in range(1, max_iter + 1):
        hn = m * np.fft.ifft2(S * np.fft.fft2(h)) + m
        inc = float(np.linalg.norm(hn - h))
        if prev_inc is not None and prev_inc > 0:
            contraction.append(inc / prev_inc)
        prev_inc = inc
        h = hn
        psi = np.fft.ifft2(C * np.fft.fft2(h))
        residual = _residual_of(psi, m, hw)
        if residual <= tol:
            edge = np.concatenate([psi[0, :], psi[-1, :], psi[:, 0], psi[:, -1]])
            return GridMap(
                ComplexGrid(psi, hw), residual, it, contraction,
                float(np.max(np.abs(edge))),
            )
    raise ConvergenceError(
        f"Beltrami residual {residual:.3e} > tol {tol:.3e} after {max_iter} iterations",
        last_iterate=ComplexGrid(psi, hw), residual=residual, history=contraction,
    )


# ---------------------------------------------------------------------------
# mesh-based planar maps
# ---------------------------------------------------------------------------


@dataclass
class PlanarMap:
    """Piecewise-linear map of a mesh into the plane (nodal image points)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes, 2):
            raise InvalidInputError("planar map needs one image point per node")
        if not np.isfinite(self.values).all():
            raise InvalidInputError("non-finite image points")

    def gradients(self):
        """Per-triangle 2x2 Jacobians."""
        return self.mesh.gradients(self.values)

    def jacobian_dets(self):
        J = self.gradients()
        return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]

    @classmethod
    def identity(cls, mesh):
        return cls(mesh, mesh.nodes.copy())

    @classmethod
    def from_grid_map(cls, gm, mesh):
        z = mesh.nodes[:, 0] + 1j * mesh.nodes[:, 1]
        w = gm(z)
        return cls(mesh, np.stack([w.real, w.imag], axis=1))


def _locate(points, nodes, triangles, tol=1e-9):
    """Containing triangle and barycentric coordinates for each query point.

    Returns (tri_index, bary) with tri_index -1 for points outside the
    triangulation (up to ``tol`` slack on the barycentric coordinates).
    """
    pts = np.asarray(points, dtype=float)
    cent = nodes[triangles].mean(axis=1)
    tree = cKDTree(cent)
    T = len(triangles)
    found = np.full(len(pts), -1, dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    remaining = np.arange(len(pts))
    k = 8
    checked = 0
    while len(remaining) and checked < T:
        k = min(k, T)
        _, idx = tree.query(pts[remaining], k=k)
        idx = np.atleast_2d(idx.reshape(len(remaining), -1))
        new_found = np.zeros(len(remaining), dtype=bool)
        for col in range(checked, idx.shape[1]):
            cand = idx[:, col]
            tri = triangles[cand]
            p0 = nodes[tri[:, 0]]
            d1 = nodes[tri[:, 1]] - p0
            d2 = nodes[tri[:, 2]] - p0
            rhs = pts[remaining] - p0
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            l1 = (rhs[:, 0] * d2[:, 1] - rhs[:, 1] * d2[:, 0]) / det
            l2 = (d1[:, 0] * rhs[:, 1] - d1[:, 1] * rhs[:, 0]) / det
            l0 = 1.0 - l1 - l2
            inside = (
                (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol) & ~new_found
            )
            rows = remaining[inside]
            found[rows] = cand[inside]
            bary[rows, 0] = l0[inside]
            bary[rows, 1] = l1[inside]
            bary[rows, 2] = l2[inside]
            new_found |= inside
        remaining = remaining[~new_found]
        checked = k
        k = min(4 * k, T)
    return found, bary


def invert_map(phi, targets, tol=1e-9):
    """Preimages phi^{-1}(y) for each target point (B, 2).

    Exact inverse of the PL interpolant: locate the containing image
    triangle, then apply the per-triangle affine inverse. Raises
    :class:`NotInjectiveError` if any triangle flips orientation and
    :class:`OutOfDomainError` if a target lies outside the image.
    """
    pts = np.asarray(targets, dtype=float).reshape(-1, 2)
    dets = phi.jacobian_dets()
    if np.any(dets <= 0.0):
        raise NotInjectiveError(
            f"{int(np.sum(dets <= 0))} image triangles are degenerate or flipped"
        )
    tri_idx, bary = _locate(pts, phi.values, phi.mesh.triangles, tol=tol)
    if np.any(tri_idx < 0):
        raise OutOfDomainError(
            f"{int(np.sum(tri_idx < 0))} target points outside the image"
        )
    corners = phi.mesh.nodes[phi.mesh.triangles[tri_idx]]  # (B, 3, 2)
    return np.einsum("bi,bid->bd", bary, corners)


# ---------------------------------------------------------------------------
# factorization pipeline
# ---------------------------------------------------------------------------


def _sample_mu_on_grid(u, n, half_width, smooth_cells=1.0):
    """Piecewise-constant per-triangle mu resampled onto a periodic grid,
    zero outside the mesh, optionally mollified by a Gaussian of width
    ``smooth_cells`` grid cells (tames spectral ringing)."""
    Z = u.gradients()
    E, F, G = metric_of_gradient(Z)
    mu_tri = beltrami_coefficient(E, F, G)

    g = ComplexGrid(np.zeros((n, n), complex), half_width)
    X, Y = g.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    rmax = np.max(np.linalg.norm(u.mesh.nodes, axis=1))
    near = np.linalg.norm(pts, axis=1) <= rmax + 2.0 * g.spacing
    tri_idx, _ = _locate(pts[near], u.mesh.nodes, u.mesh.triangles, tol=1e-9)
    vals = np.zeros(len(pts), dtype=complex)
    hit = tri_idx >= 0
    vals[np.flatnonzero(near)[hit]] = mu_tri[tri_idx[hit]]
    mu = vals.reshape(n, n)
    if smooth_cells > 0:
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=g.spacing)
        kx, ky = np.meshgrid(k, k, indexing="xy")
        sig = smooth_cells * g.spacing
        mu = np.fft.ifft2(np.fft.fft2(mu) * np.exp(-0.5 * sig * sig * (kx**2 + ky**2)))
    g.values = np.ascontiguousarray(mu)
    return g, float(np.max(np.abs(mu_tri)))


def factorize(u, grid_n=256, half_width=HALF_WIDTH, tol=1e-6, max_iter=60,
              conformal_tol="auto", smooth_cells=1.0):
    """Factor u = v o phi with phi quasiconformal and v as close to harmonic
    as u is to area-critical.

    Returns ``(phi, v, report)``: phi is a :class:`PlanarMap` of u's mesh,
    v a :class:`DiscreteMap` on the image mesh (nodes phi(x_i), values
    u(x_i) — exactly the PL version of u o phi^-1), and the report records
    sup|mu|, solver statistics, and the conformal-factor deviation
    max |g - rho Dphi^T Dphi| per triangle.
    """
    mu_grid, sup_mu = _sample_mu_on_grid(u, grid_n, half_width, smooth_cells)
    if conformal_tol == "auto":
        # per-triangle gradients of a PL map carry O(h) noise, so a mu below
        # a fraction of the mesh size is indistinguishable from conformal
        conformal_tol = 0.2 * u.mesh.h
    report = {"sup_mu": sup_mu, "conformal_tol": float(conformal_tol)}
    if sup_mu <= conformal_tol:
        phi = PlanarMap.identity(u.mesh)
        report.update({"iterations": 0, "residual": 0.0, "conformal": True})
    else:
        gm = solve_beltrami(mu_grid, tol=tol, max_iter=max_iter)
        phi = PlanarMap.from_grid_map(gm, u.mesh)
        report.update(
            {
                "iterations": gm.iterations,
                "residual": gm.residual,
                "conformal": False,
                "far_field_deviation": gm.far_field_deviation,
            }
        )
    dets = phi.jacobian_dets()
    if np.any(dets <= 0.0):
        raise NotInjectiveError("computed change of variables flips a triangle")
    image_mesh = Mesh(phi.values, u.mesh.triangles, u.mesh.boundary)
    v = DiscreteMap(image_mesh, u.values)

    Z = u.gradients()
    E, F, G = metric_of_gradient(Z)
    J = phi.gradients()
    JtJ = np.einsum("tki,tkj->tij", J, J)
    rho = np.sqrt(np.maximum(E * G - F * F, 0.0)) / dets
    gmat = np.empty_like(JtJ)
    gmat[:, 0, 0] = E
    gmat[:, 0, 1] = gmat[:, 1, 0] = F
    gmat[:, 1, 1] = G
    dev = np.abs(gmat - rho[:, None, None] * JtJ)
    report["rho_min"] = float(np.min(rho))
    report["rho_max"] = float(np.max(rho))
    report["conformal_factor_deviation"] = float(np.max(dev))
    return phi, v, report


# ---------------------------------------------------------------------------
# residuals and classification
# ---------------------------------------------------------------------------


def harmonic_residual(v):
    """L2 norm of the discrete Laplacian of v over interior nodes, summed
    over components (FEM stiffness residual with lumped mass)."""
    K = stiffness_matrix(v.mesh)
    m = lumped_mass(v.mesh)
    ii = np.flatnonzero(v.mesh.interior)
    total = 0.0
    for a in range(v.codim):
        lap = (K @ v.values[:, a])[ii] / m[ii]
        total += float(np.sqrt(np.sum(m[ii] * lap * lap)))
    return total


def _prolong(mapping, times, cls):
    """Interpolate a PL map onto ``times`` red refinements of its mesh (the
    function is unchanged; only the test space grows)."""
    mesh, vals = mapping.mesh, mapping.values
    for _ in range(times):
        fine = refine(mesh)
        t = mesh.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq = np.unique(e, axis=0)
        mid_vals = 0.5 * (vals[uniq[:, 0]] + vals[uniq[:, 1]])
        vals = np.concatenate([vals, mid_vals])
        mesh = fine
    return cls(mesh, vals)


def outer_residual(u, test_refine=1):
    """Dual-norm residual of the area first variation over test functions
    vanishing on the boundary.

    With ``test_refine`` = 0 the test space is the solve space and the value
    is ~0 for any discrete minimizer; with the default 1 the functional is
    measured against a once-refined test space, so it tracks discretization
    error of the underlying PDE and decreases under mesh refinement.
    """
    w = _prolong(u, test_refine, lambda m, v: DiscreteMap(m, v)) if test_refine else u
    Z = np.ascontiguousarray(w.gradients())
    DA = backend.area_gradient_batch(Z)
    r = _scatter_rows(w.mesh, DA)
    r[w.mesh.boundary] = 0.0
    return dual_norm(w.mesh, r)


def inner_residual(w, psi=None, test_refine=1):
    """Dual-norm weak residual of div B(Dw|Dpsi) over planar test fields
    vanishing on the boundary; psi defaults to zero (pure 2-D system)."""
    if psi is not None and psi.mesh is not w.mesh:
        raise InvalidInputError("w and psi must share a mesh")
    vals = w.values if psi is None else np.concatenate([w.values, psi.values], axis=1)
    stacked = _prolong(
        DiscreteMap(w.mesh, vals), test_refine, lambda m, v: DiscreteMap(m, v)
    ) if test_refine else DiscreteMap(w.mesh, vals)
    Z = np.ascontiguousarray(stacked.gradients())
    B = backend.inner_stress_batch(Z)
    r = _scatter_rows(stacked.mesh, B)
    r[stacked.mesh.boundary] = 0.0
    return dual_norm(stacked.mesh, r)


@dataclass
class RegionLabel:
    """Per-node classification: 0 = zero-gradient set, 1 = rank-one set,
    2 = full-rank set."""

    labels: np.ndarray
    tol_grad: float
    tol_minor: float

    E1, ZSET, OSET = 0, 1, 2

    def counts(self):
        return {
            "E1": int(np.sum(self.labels == self.E1)),
            "Z": int(np.sum(self.labels == self.ZSET)),
            "O": int(np.sum(self.labels == self.OSET)),
        }


def classify_regions(v, tol_grad, tol_minor):
    """Label each node by the size of the local gradient: below ``tol_grad``
    -> E1; all 2x2 minors below ``tol_minor`` -> Z; otherwise O.

    Nodal gradients are area-weighted averages of adjacent triangle values.
    """
    if tol_grad < 0 or tol_minor < 0:
        raise InvalidInputError("tolerances must be >= 0")
    Z = v.gradients()  # (T, n, 2)
    mesh = v.mesh
    w = mesh.areas
    acc = np.zeros((mesh.n_nodes, v.codim, 2))
    wsum = np.zeros(mesh.n_nodes)
    for i in range(3):
        np.add.at(acc, mesh.triangles[:, i], Z * w[:, None, None])
        np.add.at(wsum, mesh.triangles[:, i], w)
    acc /= wsum[:, None, None]

    gnorm = np.linalg.norm(acc.reshape(mesh.n_nodes, -1), axis=1)
    minors = (
        backend.minor_max_batch(np.ascontiguousarray(acc))
        if v.codim >= 2
        else np.zeros(mesh.n_nodes)
    )
    labels = np.full(mesh.n_nodes, RegionLabel.OSET, dtype=np.int8)
    labels[minors <= tol_minor] = RegionLabel.ZSET
    labels[gnorm <= tol_grad] = RegionLabel.E1
    return RegionLabel(labels, float(tol_grad), float(tol_minor))
