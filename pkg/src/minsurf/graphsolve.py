"""Discrete area functional on triangle meshes and its minimization.

A map is piecewise linear over a mesh; the energy is the sum of the area
integrand of the per-triangle gradient times the triangle area. Minimizing
over interior nodal values with fixed boundary data produces discretely
outer-critical maps.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import backend
from .errors import ConvergenceError, InvalidInputError, InvalidMeshError
from .mesh import Mesh, harmonic_extension, stiffness_matrix


@dataclass
class DiscreteMap:
    """Nodal values in R^n over a mesh; the map is the PL interpolant."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.mesh.n_nodes:
            raise InvalidInputError("value count does not match node count")
        if not np.isfinite(self.values).all():
            raise InvalidInputError("non-finite nodal values")

    @property
    def codim(self):
        return self.values.shape[1]

    def gradients(self):
        """Per-triangle gradient, shape (T, n, 2)."""
        return self.mesh.gradients(self.values)


@dataclass
class SolveConfig:
    """Descent parameters for :func:`minimize`."""

    tol: float = 1e-8          # gradient norm per sqrt(interior node)
    max_iter: int = 1000
    armijo: float = 1e-4       # sufficient-decrease constant
    backtrack: float = 0.5     # step shrink factor
    memory: int = 10           # quasi-Newton history length; 0 = plain descent
    initializer: str = "harmonic"  # "harmonic" | "zero"

    def __post_init__(self):
        if self.tol <= 0:
            raise InvalidInputError("tol must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise InvalidInputError("backtrack factor must be in (0, 1)")
        if self.initializer not in ("harmonic", "zero"):
            raise InvalidInputError(f"unknown initializer {self.initializer!r}")


def boundary_preset(name, points, scale=1.0, matrix=None):
    """Named boundary data evaluated at ``points`` (B, 2).

    ``affine``: points @ matrix^T (matrix is n x 2, default identity);
    ``zsq``: (Re z^2, Im z^2)/4 scaled by ``scale``.
    """
    p = np.asarray(points, dtype=float)
    if name == "affine":
        A = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
        return scale * (p @ A.T)
    if name == "zsq":
        x, y = p[:, 0], p[:, 1]
        return scale * 0.25 * np.stack([x * x - y * y, 2.0 * x * y], axis=1)
    raise InvalidInputError(f"unknown boundary preset {name!r}")


def assemble_energy(u):
    """Total discrete area sum_T A(Du|_T) |T|; at least the domain area."""
    Z = np.ascontiguousarray(u.gradients())
    return float(np.sum(backend.area_batch(Z) * u.mesh.areas))


def _scatter_rows(mesh, per_tri_field):
    """Scatter (T, n, 2) per-triangle stress into the (N, n) nodal pairing
    with hat-function gradients."""
    contrib = np.einsum(
        "tnd,tid->tin", per_tri_field, mesh.hat_grads
    ) * mesh.areas[:, None, None]
    n = per_tri_field.shape[1]
    out = np.zeros((mesh.n_nodes, n))
    np.add.at(out, mesh.triangles.ravel(), contrib.reshape(-1, n))
    return out


def assemble_gradient(u, zero_boundary=True):
    """Exact nodal gradient of :func:`assemble_energy`; boundary rows zeroed."""
    Z = np.ascontiguousarray(u.gradients())
    DA = backend.area_gradient_batch(Z)
    out = _scatter_rows(u.mesh, DA)
    if zero_boundary:
        out[u.mesh.boundary] = 0.0
    return out


def _two_loop(g, s_list, y_list):
    """L-BFGS two-loop recursion for the descent direction."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_list, y_list), reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(boundary_values, mesh, config=None, n=None):
    """Minimize the discrete area with fixed boundary values.

    ``boundary_values`` is (B, n) over the boundary nodes in index order.
    Returns a :class:`DiscreteMap` whose interior gradient norm is at most
    ``config.tol * sqrt(#interior nodes)``; raises :class:`ConvergenceError`
    (carrying the last iterate) if ``max_iter`` steps do not reach it.
    """
    cfg = config or SolveConfig()
    bv = np.asarray(boundary_values, dtype=float)
    if bv.ndim == 1:
        bv = bv[:, None]
    if n is not None and bv.shape[1] != n:
        raise InvalidInputError("boundary data codimension mismatch")
    if bv.shape[0] != int(np.sum(mesh.boundary)):
        raise InvalidMeshError("boundary value count does not match boundary nodes")
    if not np.isfinite(bv).all():
        raise InvalidInputError("non-finite boundary values")

    if cfg.initializer == "harmonic":
        values = harmonic_extension(mesh, bv)
    else:
        values = np.zeros((mesh.n_nodes, bv.shape[1]))
        values[mesh.boundary] = bv
    u = DiscreteMap(mesh, values)
    ii = np.flatnonzero(mesh.interior)
    if len(ii) == 0:
        return u
    target = cfg.tol * np.sqrt(len(ii))

    def unpack(x):
        v = u.values.copy()
        v[ii] = x.reshape(len(ii), -1)
        return DiscreteMap(mesh, v)

    x = u.values[ii].ravel().copy()
    f = assemble_energy(u)
    g = assemble_gradient(u)[ii].ravel()
    s_hist, y_hist = [], []
    history = [float(np.linalg.norm(g))]

    for _ in range(cfg.max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm <= target:
            return unpack(x)
        d = _two_loop(g, s_hist, y_hist) if cfg.memory else -g
        slope = d @ g
        if slope >= 0.0:  # not a descent direction; reset to steepest descent
            s_hist, y_hist = [], []
            d = -g
            slope = -gnorm * gnorm
        step = 1.0 if s_hist else min(1.0, 1.0 / gnorm)
        while True:
            xn = x + step * d
            fn = assemble_energy(unpack(xn))
            if fn <= f + cfg.armijo * step * slope:
                break
            step *= cfg.backtrack
            if step < 1e-16:
                raise ConvergenceError(
                    "line search failed", last_iterate=unpack(x),
                    residual=float(gnorm), history=history,
                )
        gn = assemble_gradient(unpack(xn))[ii].ravel()
        if cfg.memory:
            s, yv = xn - x, gn - g
            if s @ yv > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
                s_hist.append(s)
                y_hist.append(yv)
                if len(s_hist) > cfg.memory:
                    s_hist.pop(0)
                    y_hist.pop(0)
        x, f, g = xn, fn, gn
        history.append(float(np.linalg.norm(g)))

    if np.linalg.norm(g) <= target:
        return unpack(x)
    raise ConvergenceError(
        f"no convergence in {cfg.max_iter} iterations "
        f"(|g| = {np.linalg.norm(g):.3e}, target {target:.3e})",
        last_iterate=unpack(x), residual=float(np.linalg.norm(g)), history=history,
    )


def dual_norm(mesh, nodal_residual):
    """Discrete H^1-dual norm of a nodal functional vanishing on the boundary.

    Computes sqrt(r^T K^{-1} r) per component on the interior block of the
    stiffness matrix and returns the Euclidean norm across components.
    """
    r = np.asarray(nodal_residual, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    ii = np.flatnonzero(mesh.interior)
    if len(ii) == 0:
        return 0.0
    K = stiffness_matrix(mesh)[ii][:, ii].tocsc()
    solve = sp.linalg.factorized(K)
    total = 0.0
    for a in range(r.shape[1]):
        rb = r[ii, a]
        total += float(rb @ solve(rb))
    return float(np.sqrt(max(total, 0.0)))


def inner_variation_residual(u):
    """Dual-norm weak residual of div(B(Du)) over vector test fields
    vanishing on the boundary."""
    Z = np.ascontiguousarray(u.gradients())
    B = backend.inner_stress_batch(Z)
    r = _scatter_rows(u.mesh, B)
    r[u.mesh.boundary] = 0.0
    return dual_norm(u.mesh, r)


def small_det_check(u, eps):
    """Largest 2x2 row-minor of Du over all triangles, with a pass flag."""
    if eps < 0:
        raise InvalidInputError("eps must be >= 0")
    Z = np.ascontiguousarray(u.gradients())
    mm = float(np.max(backend.minor_max_batch(Z))) if u.codim >= 2 else 0.0
    return {"max_minor": mm, "pass": bool(mm <= eps)}
