"""End-to-end acceptance gate.

Each test pins one advertised guarantee of the package at its stated
tolerance: algebraic identity suites, gradient/stress consistency,
boundedness and convexity scans, the quasiconformal solver and
factorization pipeline, agreement with an independent scalar Newton
solver, and byte-level determinism of all reports.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from minsurf import beltrami as bt
from minsurf import graphsolve as gs
from minsurf import ineqlab, matcore
from minsurf import mesh as mm


def run_cli(*argv, timeout=600):
    return subprocess.run(
        [sys.executable, "-m", "minsurf.cli", *argv],
        capture_output=True, text=True, timeout=timeout,
    )


# ---------------------------------------------------------------------------
# 1. algebraic identity suite: zero violations at 1e-9 across codimensions
# ---------------------------------------------------------------------------


def test_acceptance_01_identity_suite():
    start = time.perf_counter()
    for n in (2, 3, 5):
        rep = matcore.verify_identities(n=n, samples=100000, seed=0, tol=1e-9)
        assert rep.ok, f"n={n}: {rep.violations}"
        assert rep.samples == 100000
    assert time.perf_counter() - start < 60.0


# ---------------------------------------------------------------------------
# 2. gradient vs finite differences; stress vs metric formula
# ---------------------------------------------------------------------------


def test_acceptance_02_gradient_and_stress():
    rng = np.random.default_rng(2)
    h = 1e-6
    count = 0
    while count < 10000:
        n = int(rng.integers(1, 6))
        Z = rng.uniform(-1, 1, (n, 2))
        Z *= rng.uniform(0, 10) / max(np.linalg.norm(Z), 1e-12)
        DA = matcore.area_gradient(Z)
        i = int(rng.integers(n))
        j = int(rng.integers(2))
        E = np.zeros_like(Z)
        E[i, j] = h
        fd = (matcore.area(Z + E) - matcore.area(Z - E)) / (2 * h)
        scale = max(abs(fd), 1.0)
        assert abs(DA[i, j] - fd) / scale < 1e-6
        if n >= 2:
            g = np.eye(2) + Z.T @ Z
            ref = np.sqrt(np.linalg.det(g)) * np.linalg.inv(g)
            assert np.abs(matcore.inner_stress(Z) - ref).max() < 1e-12 * max(
                1.0, np.abs(ref).max()
            )
        count += 1


# ---------------------------------------------------------------------------
# 3. boundedness of the stress and its derivative up to |X| = 1e3
# ---------------------------------------------------------------------------


def test_acceptance_03_boundedness():
    start = time.perf_counter()
    rep = matcore.boundedness_scan(n=3, K=4.0, L=1.0, seed=0)
    # decade centers are geometric midpoints; the top decade spans to 1e3
    assert max(rep.decade_centers) * 10**0.5 >= 1e3 * (1 - 1e-12)
    assert abs(rep.slope_B) <= 0.1
    assert abs(rep.slope_DB) <= 0.1
    assert np.isfinite(max(rep.sup_B))
    assert np.isfinite(max(rep.sup_DB_scaled))
    assert time.perf_counter() - start < 120.0


# ---------------------------------------------------------------------------
# 4. rank-one convexity with the explicit ellipticity floor
# ---------------------------------------------------------------------------


def test_acceptance_04_rank_one_convexity():
    cfg = ineqlab.ScanConfig(Lam=2.0, samples=100000, seed=0)
    rep = ineqlab.convexity_rank_one_scan(cfg)
    assert rep.ok
    assert rep.stats["min_ratio"] >= 5.0**-1.5 - 1e-6
    rep = ineqlab.hessian_rank_one_scan(cfg)
    assert rep.ok
    assert rep.stats["min_margin"] >= -1e-6


# ---------------------------------------------------------------------------
# 5. convexity on small-minor matrices: positive threshold, real failure
#    at the trivial bound, deterministic replay
# ---------------------------------------------------------------------------


def test_acceptance_05_small_det_convexity():
    lam = 0.5 * 5.0**-1.5
    cfg = ineqlab.ScanConfig(Lam=2.0, samples=100000, seed=0)
    rep = ineqlab.small_det_convexity_scan(cfg, lam=lam)
    eps_est = rep.constants["eps_est"]
    assert eps_est > 0.0
    assert rep.stats["violations_at_Lam_sq"] >= 1
    # independent recheck at the estimated level: violation-free
    count, _, _, _ = ineqlab._small_det_violations(cfg, lam, eps_est, level=99)
    assert count == 0
    # deterministic replay
    rep2 = ineqlab.small_det_convexity_scan(cfg, lam=lam)
    assert rep.to_dict() == rep2.to_dict()


# ---------------------------------------------------------------------------
# 6. stress-difference null inequality and the orthogonal split
# ---------------------------------------------------------------------------


def test_acceptance_06_sptnull_and_split():
    start = time.perf_counter()
    cfg = ineqlab.ScanConfig(K=4.0, eps3=0.5, L=1.0, n=3, samples=1000000, seed=0)
    rep = ineqlab.sptnull_scan(cfg)
    assert rep.ok
    assert rep.constants["delta_est"] > 0.0
    assert rep.stats["chain_invariant_ok"]
    assert len(rep.violations) == 0

    rng = np.random.default_rng(6)
    Y = rng.standard_normal((100000, 2, 2))
    ok_cols = np.linalg.norm(Y[:, :, 0], axis=1) > 1e-6
    Y = Y[ok_cols]
    Ye, ok = ineqlab._split_batch(Y)
    assert np.all(ok)
    Yo = Y - Ye
    assert np.abs(np.sum(Yo * Ye, axis=(1, 2))).max() < 1e-12
    assert np.abs(np.sum(Yo[:, :, 0] * Yo[:, :, 1], axis=1)).max() < 1e-12
    det = lambda M: M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    assert np.abs(det(Yo) - det(Y)).max() < 1e-12
    assert time.perf_counter() - start < 300.0


# ---------------------------------------------------------------------------
# 7. quasiconformal solver: exact identity at mu = 0; fast convergence and
#    a stable contraction rate for a sup-0.5 smooth coefficient on 512^2
# ---------------------------------------------------------------------------


def test_acceptance_07_beltrami_solver():
    gm = bt.solve_beltrami(bt.ComplexGrid(np.zeros((512, 512), complex)))
    assert gm.residual == 0.0
    assert np.abs(gm.psi.values).max() == 0.0

    mu = bt.plateau_bump(512)
    assert np.abs(mu.values).max() == pytest.approx(0.5, rel=1e-12)
    gm = bt.solve_beltrami(mu, tol=1e-3, max_iter=30)
    assert gm.iterations <= 30
    assert gm.residual < 1e-3
    assert all(0.35 <= c <= 0.65 for c in gm.contraction)


# ---------------------------------------------------------------------------
# 8. boundary data (Re z^2, Im z^2)/4 on the unit disc: all three residual
#    diagnostics decrease by >= 1.5x under one refinement
# ---------------------------------------------------------------------------


def _sector_inverse_map(u):
    """Restrict u to a sector where it is injective and return the exact
    piecewise-linear inverse as a map on the image mesh."""
    d = u.mesh
    cent = d.nodes[d.triangles].mean(axis=1)
    r = np.linalg.norm(cent, axis=1)
    th = np.arctan2(cent[:, 1], cent[:, 0])
    sub, ids = mm.submesh(d, (r > 0.35) & (r < 0.95) & (np.abs(th) < np.pi / 3))
    f = bt.PlanarMap(sub, u.values[ids])
    pre = bt.invert_map(f, f.values)
    assert np.abs(pre - sub.nodes).max() < 1e-9  # PL inverse is exact at nodes
    image_mesh = mm.Mesh(f.values, sub.triangles, sub.boundary)
    return gs.DiscreteMap(image_mesh, pre)


def test_acceptance_08_residual_pipeline():
    start = time.perf_counter()
    outer, harm, inner = [], [], []
    for rings in (12, 24):
        d = mm.disc_mesh(rings)
        bv = gs.boundary_preset("zsq", d.nodes[d.boundary])
        u = gs.minimize(bv, d, gs.SolveConfig(tol=1e-10, max_iter=3000))
        outer.append(bt.outer_residual(u))
        phi, v, rep = bt.factorize(u)
        assert rep["sup_mu"] < 0.05
        harm.append(bt.harmonic_residual(v))
        inner.append(bt.inner_residual(_sector_inverse_map(u)))
    assert outer[0] / outer[1] >= 1.5
    assert harm[0] / harm[1] >= 1.5
    assert inner[0] / inner[1] >= 1.5
    assert time.perf_counter() - start < 300.0


# ---------------------------------------------------------------------------
# 9. scalar minimizer vs an independent Newton solver for the minimal
#    graph equation
# ---------------------------------------------------------------------------


def _newton_minimal_graph(mesh, boundary_values, tol=1e-13, max_iter=50):
    """Damped-free Newton iteration for the scalar discrete minimal graph
    equation, assembled from scratch (no shared code with the minimizer
    beyond the mesh geometry)."""
    vals = mm.harmonic_extension(mesh, boundary_values)[:, 0]
    ii = np.flatnonzero(mesh.interior)
    pos = -np.ones(mesh.n_nodes, dtype=int)
    pos[ii] = np.arange(len(ii))
    tri = mesh.triangles
    hg = mesh.hat_grads  # (T, 3, 2)
    wT = mesh.areas
    for _ in range(max_iter):
        z = np.einsum("ti,tid->td", vals[tri], hg)  # (T, 2)
        q = np.sqrt(1.0 + np.sum(z * z, axis=1))
        flux = z / q[:, None]
        r = np.zeros(mesh.n_nodes)
        np.add.at(r, tri, wT[:, None] * np.einsum("tid,td->ti", hg, flux))
        if np.abs(r[ii]).max() < tol:
            break
        H = (
            (1.0 + np.sum(z * z, axis=1))[:, None, None] * np.eye(2)
            - np.einsum("td,te->tde", z, z)
        ) / (q**3)[:, None, None]
        loc = np.einsum("tid,tde,tje->tij", hg, H, hg) * wT[:, None, None]
        rows = pos[np.repeat(tri, 3, axis=1).ravel()]
        cols = pos[np.tile(tri, (1, 3)).ravel()]
        keep = (rows >= 0) & (cols >= 0)
        K = sp.coo_matrix(
            (loc.ravel()[keep], (rows[keep], cols[keep])),
            shape=(len(ii), len(ii)),
        ).tocsr()
        vals[ii] -= spla.spsolve(K, r[ii])
    return vals


def test_acceptance_09_scalar_newton_oracle():
    mesh = mm.unit_square_mesh(64)
    xb, yb = mesh.nodes[mesh.boundary].T
    bv = 0.2 * np.sin(2 * np.pi * xb) * np.cos(np.pi * yb) + 0.1 * xb * yb
    ref = _newton_minimal_graph(mesh, bv)
    u = gs.minimize(
        bv[:, None], mesh, gs.SolveConfig(tol=1e-12, max_iter=5000), n=1
    )
    assert np.abs(u.values[:, 0] - ref).max() < 1e-6


# ---------------------------------------------------------------------------
# 10. every report byte-identical across reruns and thread counts
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ("verify", "--n", "3", "--samples", "50000"),
        ("scan", "--kind", "rank1-convexity", "--samples", "50000"),
        ("scan", "--kind", "rank1-hessian", "--samples", "20000"),
        ("scan", "--kind", "small-det", "--samples", "20000"),
        ("scan", "--kind", "sptnull", "--samples", "50000"),
        ("scan", "--kind", "boundedness"),
    ],
)
def test_acceptance_10_reports_byte_identical(argv, tmp_path):
    blobs = []
    for i, threads in enumerate((1, 1, 4, 4)):
        p = tmp_path / f"out{i}.json"
        r = run_cli(*argv, "--threads", str(threads), "--out", str(p))
        assert r.returncode in (0, 1), r.stderr
        blobs.append(p.read_bytes())
    assert blobs[0] == blobs[1] == blobs[2] == blobs[3]
    json.loads(blobs[0])  # reports must stay valid JSON
