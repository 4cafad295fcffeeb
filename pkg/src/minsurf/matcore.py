"""Exact small-matrix algebra of the graph-area integrand.

The central object is an n x 2 gradient matrix Z. The module provides the
area integrand, its gradient, the inner-variation stress B(Z), the induced
metric, closed-form 2x2 SVD, and seeded randomized verification of the
algebraic identities these objects satisfy.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import InvalidInputError
from .utils import (
    chunked_map,
    det2,
    inv2,
    random_orthogonal,
    rot2,
    sqrtm2,
)


def _as_gradient(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != 2 or Z.shape[0] < 1:
        raise InvalidInputError(f"expected an n x 2 matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("gradient matrix has non-finite entries")
    return Z


def stack_blocks(X, Y):
    """Stack a 2x2 top block over an (n-2) x 2 bottom block."""
    X = np.asarray(X, dtype=float)
    if X.shape != (2, 2):
        raise InvalidInputError(f"top block must be 2x2, got {X.shape}")
    Y = np.asarray(Y, dtype=float).reshape(-1, 2) if np.size(Y) else np.empty((0, 2))
    return np.vstack([X, Y])


def area(Z):
    """Area integrand sqrt(1 + |Z|^2 + sum of squared 2x2 minors); >= 1."""
    Z = _as_gradient(Z)
    return float(backend.area_batch(Z[None])[0])


def area_gradient(Z):
    """Derivative of the area integrand; equals Z B(Z)."""
    Z = _as_gradient(Z)
    return backend.area_gradient_batch(Z[None])[0]


def inner_stress(Z):
    """Inner-variation stress B(Z): symmetric, positive diagonal, det 1."""
    Z = _as_gradient(Z)
    return backend.inner_stress_batch(Z[None])[0]


def inner_stress_blocks(X, Y):
    """B evaluated on the stacked matrix (X over Y)."""
    return inner_stress(stack_blocks(X, Y))


def cof2(M):
    """Cofactor of a 2x2 matrix: M cof2(M) = det(M) id exactly."""
    M = np.asarray(M, dtype=float)
    return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])


def metric(Z):
    """Induced metric id + Z^T Z; >= id in quadratic-form order."""
    Z = _as_gradient(Z)
    return np.eye(2) + Z.T @ Z


def qc_distortion(M):
    """|M|^2 / det M when det M > 0, +inf otherwise. Minimum 2 at conformal
    matrices."""
    M = np.asarray(M, dtype=float)
    d = det2(M)
    if d <= 0.0:
        return np.inf
    return float(np.sum(M * M) / d)


@dataclass
class Svd2Result:
    U: np.ndarray
    s: np.ndarray  # singular values, s[0] >= s[1] >= 0
    V: np.ndarray

    def reconstruct(self):
        return self.U @ np.diag(self.s) @ self.V.T


def svd2(M):
    """Closed-form SVD of a 2x2 matrix, M = U diag(s) V^T with det U = +1.

    For symmetric positive M the factors satisfy U = V.
    """
    M = np.asarray(M, dtype=float)
    e = 0.5 * (M[0, 0] + M[1, 1])
    f = 0.5 * (M[0, 0] - M[1, 1])
    g = 0.5 * (M[1, 0] + M[0, 1])
    h = 0.5 * (M[1, 0] - M[0, 1])
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    s1 = q + r
    s2 = q - r  # signed; sign moved into V below
    a1 = np.arctan2(g, f) if r > 0 else 0.0
    a2 = np.arctan2(h, e) if q > 0 else 0.0
    theta = 0.5 * (a2 - a1)
    phi = 0.5 * (a2 + a1)
    U = rot2(phi)
    V = rot2(-theta)
    if s2 < 0:
        s2 = -s2
        V = V @ np.diag([1.0, -1.0])
    return Svd2Result(U=U, s=np.array([s1, s2]), V=V)


def area_hessian_fd(Z, W, h=1e-3):
    """Second derivative of the area integrand at Z along the unit direction W.

    Second central difference with Richardson extrapolation over steps h and
    h/2.
    """
    Z = _as_gradient(Z)
    W = np.asarray(W, dtype=float)
    if W.shape != Z.shape:
        raise InvalidInputError("direction must have the same shape as Z")
    if not (0.0 < h <= 1e-3):
        raise InvalidInputError("step must lie in (0, 1e-3]")
    nrm = np.linalg.norm(W)
    if abs(nrm - 1.0) > 1e-9:
        raise InvalidInputError(f"direction must have unit norm, got {nrm}")

    def second_diff(step):
        pts = np.stack([Z + step * W, Z, Z - step * W])
        a = backend.area_batch(pts)
        return (a[0] - 2.0 * a[1] + a[2]) / step**2

    d1 = second_diff(h)
    d2 = second_diff(h / 2.0)
    return float((4.0 * d2 - d1) / 3.0)


# ---------------------------------------------------------------------------
# randomized identity verification
# ---------------------------------------------------------------------------

IDENTITY_ITEMS = (
    "orth_left_invariance",     # B(NZ) = B(Z)
    "orth_right_conjugation",   # B(ZM) = M^T B(Z) M
    "gradient_equivariance",    # DA(NZM) = N DA(Z) M
    "symmetry",                 # B symmetric
    "positive_diagonal",        # B_11, B_22 > 0
    "unimodular",               # det B = 1
    "inverse_block",            # B(X^-1|Y) = X B(X|YX) X^T / det X
    "block_reduction",          # B(X|Y) = det(S) S^-1 B(X S^-1|0) S^-1
    "metric_form",              # B = sqrt(det g) g^-1
    "gradient_product",         # DA(Z) = Z B(Z)
    "rank_one_area",            # A = sqrt(1 + |Z|^2) on rank-one matrices
)


@dataclass
class IdentityReport:
    """Outcome of a seeded identity scan."""

    n: int
    samples: int
    seed: int
    tol: float
    max_deviation: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "schema": "minsurf/identity-report@1",
            "n": self.n,
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "max_deviation": dict(sorted(self.max_deviation.items())),
            "violations": self.violations,
        }


def _record(report, item, dev, lo, count_offset):
    """Track the max deviation and any violations for one identity item."""
    if dev.size == 0:
        return
    cur = report.max_deviation.get(item, 0.0)
    report.max_deviation[item] = max(cur, float(np.max(dev)))
    bad = np.nonzero(dev > report.tol)[0]
    for idx in bad[:100]:  # cap stored records; all are reproducible from seed
        report.violations.append(
            {"item": item, "index": int(lo + idx + count_offset), "deviation": float(dev[idx])}
        )


def _identity_chunk(report, n, seed, lo, hi):
    """Evaluate every identity on samples [lo, hi) drawn from the per-run
    stream. Each sample's randomness is derived from (seed, index) so chunk
    boundaries do not affect the draws."""
    m = hi - lo
    # per-sample independent substreams keep results chunking-invariant
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(lo,))
    rng = np.random.Generator(np.random.Philox(ss))

    Z = rng.uniform(-2.0, 2.0, size=(m, n, 2))
    N = random_orthogonal(rng, m, n)
    M = random_orthogonal(rng, m, 2)

    B = backend.inner_stress_batch(Z)
    DA = backend.area_gradient_batch(Z)
    A = backend.area_batch(Z)
    scale = 1.0 + np.max(np.abs(B), axis=(1, 2))

    # (i) left orthogonal invariance
    BN = backend.inner_stress_batch(np.ascontiguousarray(N @ Z))
    dev = np.max(np.abs(BN - B), axis=(1, 2)) / scale
    _record(report, "orth_left_invariance", dev, lo, 0)

    # (ii) right orthogonal conjugation
    BM = backend.inner_stress_batch(np.ascontiguousarray(Z @ M))
    rhs = np.swapaxes(M, 1, 2) @ B @ M
    dev = np.max(np.abs(BM - rhs), axis=(1, 2)) / scale
    _record(report, "orth_right_conjugation", dev, lo, 0)

    # (iii) gradient equivariance
    DAn = backend.area_gradient_batch(np.ascontiguousarray(N @ Z @ M))
    rhs = N @ DA @ M
    dscale = 1.0 + np.max(np.abs(DA), axis=(1, 2))
    dev = np.max(np.abs(DAn - rhs), axis=(1, 2)) / dscale
    _record(report, "gradient_equivariance", dev, lo, 0)

    # (iv) symmetry, positive diagonal, det = 1
    dev = np.abs(B[:, 0, 1] - B[:, 1, 0]) / scale
    _record(report, "symmetry", dev, lo, 0)
    diag_min = np.minimum(B[:, 0, 0], B[:, 1, 1])
    dev = np.where(diag_min > 0.0, 0.0, 1.0)
    _record(report, "positive_diagonal", dev, lo, 0)
    dev = np.abs(det2(B) - 1.0) / A
    _record(report, "unimodular", dev, lo, 0)

    # (v) inverse-block identity, X sampled with bounded condition number
    if n >= 2:
        s = rng.uniform(0.3, 2.0, size=(m, 2))
        X = rot2(rng.uniform(0.0, 2 * np.pi, m)) * s[:, None, :] @ rot2(
            rng.uniform(0.0, 2 * np.pi, m)
        )
        Y = rng.uniform(-2.0, 2.0, size=(m, n - 2, 2))
        ZXinv = np.concatenate([inv2(X), Y], axis=1)
        ZYX = np.concatenate([X, Y @ X], axis=1)
        lhs = backend.inner_stress_batch(np.ascontiguousarray(ZXinv))
        BX = backend.inner_stress_batch(np.ascontiguousarray(ZYX))
        rhs = X @ BX @ np.swapaxes(X, 1, 2) / det2(X)[:, None, None]
        vscale = 1.0 + np.max(np.abs(lhs), axis=(1, 2))
        dev = np.max(np.abs(lhs - rhs), axis=(1, 2)) / vscale
        _record(report, "inverse_block", dev, lo, 0)

        # (vi) reduction to zero bottom block
        Xg = rng.uniform(-2.0, 2.0, size=(m, 2, 2))
        S = sqrtm2(
            np.eye(2)[None] + np.swapaxes(Y, 1, 2) @ Y
        )
        Sinv = inv2(S)
        lhs = backend.inner_stress_batch(
            np.ascontiguousarray(np.concatenate([Xg, Y], axis=1))
        )
        Ztop = np.concatenate([Xg @ Sinv, np.zeros((m, n - 2, 2))], axis=1)
        B0 = backend.inner_stress_batch(np.ascontiguousarray(Ztop))
        rhs = det2(S)[:, None, None] * (Sinv @ B0 @ Sinv)
        vscale = 1.0 + np.max(np.abs(lhs), axis=(1, 2))
        dev = np.max(np.abs(lhs - rhs), axis=(1, 2)) / vscale
        _record(report, "block_reduction", dev, lo, 0)

    # B = sqrt(det g) g^-1
    g = np.eye(2)[None] + np.swapaxes(Z, 1, 2) @ Z
    rhs = np.sqrt(det2(g))[:, None, None] * inv2(g)
    dev = np.max(np.abs(B - rhs), axis=(1, 2)) / scale
    _record(report, "metric_form", dev, lo, 0)

    # DA(Z) = Z B(Z)
    rhs = Z @ B
    dev = np.max(np.abs(DA - rhs), axis=(1, 2)) / dscale
    _record(report, "gradient_product", dev, lo, 0)

    # rank-one area reduces to sqrt(1 + |Z|^2)
    p = rng.standard_normal((m, n))
    q = rng.standard_normal((m, 2))
    R1 = p[:, :, None] * q[:, None, :]
    nr = np.linalg.norm(R1.reshape(m, -1), axis=1)
    R1 *= np.where(nr > 0, rng.uniform(0.0, 2.0, m) / np.maximum(nr, 1e-300), 0.0)[
        :, None, None
    ]
    a1 = backend.area_batch(np.ascontiguousarray(R1))
    ref = np.sqrt(1.0 + np.sum(R1 * R1, axis=(1, 2)))
    dev = np.abs(a1 - ref) / ref
    _record(report, "rank_one_area", dev, lo, 0)


def verify_identities(n, samples, seed, tol=1e-9, threads=1):
    """Check the algebraic identities of the stress/gradient objects on
    seeded random samples. Violations are data, not errors."""
    if n < 2:
        raise InvalidInputError("codimension must be >= 2")
    if samples < 0:
        raise InvalidInputError("sample count must be >= 0")
    report = IdentityReport(n=n, samples=samples, seed=seed, tol=tol)
    if samples == 0:
        return report

    reports = chunked_map(
        lambda lo, hi: _sub_report(report, n, seed, tol, lo, hi),
        samples,
        threads=threads,
    )
    for sub in reports:
        for k, v in sub.max_deviation.items():
            report.max_deviation[k] = max(report.max_deviation.get(k, 0.0), v)
        report.violations.extend(sub.violations)
    report.violations.sort(key=lambda r: (r["item"], r["index"]))
    return report


def _sub_report(parent, n, seed, tol, lo, hi):
    sub = IdentityReport(n=n, samples=hi - lo, seed=seed, tol=tol)
    _identity_chunk(sub, n, seed, lo, hi)
    return sub


# ---------------------------------------------------------------------------
# boundedness of B and decay of DB on quasiconformal blocks
# ---------------------------------------------------------------------------


@dataclass
class BoundednessReport:
    """Empirical sup |B(X|Y)| and sup |DB(X|Y)| (1 + |X|) across norm decades."""

    n: int
    K: float
    L: float
    seed: int
    samples_per_decade: int
    decade_centers: list = field(default_factory=list)
    sup_B: list = field(default_factory=list)
    sup_DB_scaled: list = field(default_factory=list)
    slope_B: float = 0.0
    slope_DB: float = 0.0

    def to_dict(self):
        return {
            "schema": "minsurf/boundedness-report@1",
            "n": self.n,
            "K": self.K,
            "L": self.L,
            "seed": self.seed,
            "samples_per_decade": self.samples_per_decade,
            "decade_centers": self.decade_centers,
            "sup_B": self.sup_B,
            "sup_DB_scaled": self.sup_DB_scaled,
            "slope_B": self.slope_B,
            "slope_DB": self.slope_DB,
        }


def _qc_block_sample(rng, m, n, K, L, norm_lo, norm_hi):
    """X quasiregular (|X|^2 <= K det X) with |X| log-uniform in the given
    range, Y with |Y| <= L."""
    t_max = 0.5 * (K + np.sqrt(K * K - 4.0))
    t = np.exp(rng.uniform(0.0, np.log(t_max), m))
    nu = np.exp(rng.uniform(np.log(norm_lo), np.log(norm_hi), m))
    d = nu * nu / (t + 1.0 / t)
    s1 = np.sqrt(d * t)
    s2 = np.sqrt(d / t)
    X = rot2(rng.uniform(0.0, 2 * np.pi, m)) * np.stack([s1, s2], axis=1)[
        :, None, :
    ] @ rot2(rng.uniform(0.0, 2 * np.pi, m))
    Y = rng.standard_normal((m, n - 2, 2))
    ynorm = np.linalg.norm(Y.reshape(m, -1), axis=1)
    Y *= (rng.uniform(0.0, L, m) / np.maximum(ynorm, 1e-300))[:, None, None]
    return X, Y


def boundedness_scan(
    n=3,
    K=4.0,
    L=1.0,
    seed=0,
    samples_per_decade=20000,
    norm_min=1.0,
    norm_max=1e3,
    threads=1,
):
    """Sweep |X| across decades and record sup |B| and the scaled gradient
    sup |DB| (1+|X|), with DB from central finite differences."""
    decades = int(round(np.log10(norm_max / norm_min)))
    report = BoundednessReport(
        n=n, K=K, L=L, seed=seed, samples_per_decade=samples_per_decade
    )
    for k in range(decades):
        lo_n, hi_n = norm_min * 10.0**k, norm_min * 10.0 ** (k + 1)
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))
        )
        X, Y = _qc_block_sample(rng, samples_per_decade, n, K, L, lo_n, hi_n)
        Z = np.ascontiguousarray(np.concatenate([X, Y], axis=1))
        B = backend.inner_stress_batch(Z)
        xnorm = np.linalg.norm(X.reshape(len(X), -1), axis=1)
        supB = float(np.max(np.linalg.norm(B.reshape(len(B), -1), axis=1)))

        h = 1e-6 * (1.0 + xnorm)
        db_sq = np.zeros(len(Z))
        for i in range(n):
            for j in range(2):
                E = np.zeros_like(Z)
                E[:, i, j] = h
                Bp = backend.inner_stress_batch(np.ascontiguousarray(Z + E))
                Bm = backend.inner_stress_batch(np.ascontiguousarray(Z - E))
                D = (Bp - Bm) / (2.0 * h)[:, None, None]
                db_sq += np.sum(D * D, axis=(1, 2))
        scaled = np.sqrt(db_sq) * (1.0 + xnorm)
        report.decade_centers.append(float(np.sqrt(lo_n * hi_n)))
        report.sup_B.append(supB)
        report.sup_DB_scaled.append(float(np.max(scaled)))

    x = np.log10(report.decade_centers)
    report.slope_B = float(np.polyfit(x, np.log10(report.sup_B), 1)[0])
    report.slope_DB = float(np.polyfit(x, np.log10(report.sup_DB_scaled), 1)[0])
    return report
