"""Small shared helpers: 2x2 algebra on batches, deterministic chunked
parallelism, and tolerance bookkeeping."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

#: default absolute / relative tolerance used by comparisons across the package
ABS_TOL = 1e-12
REL_TOL = 1e-9


def close(a, b, scale=1.0, abs_tol=ABS_TOL, rel_tol=REL_TOL):
    return np.abs(a - b) <= abs_tol + rel_tol * np.abs(scale)


def rot2(theta):
    """Batched 2x2 rotation matrices, shape (..., 2, 2)."""
    theta = np.asarray(theta)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def det2(M):
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def inv2(M):
    """Batched inverse of 2x2 matrices."""
    d = det2(M)
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    out[..., 1, 1] = M[..., 0, 0]
    return out / d[..., None, None]


def sqrtm2(A):
    """Batched principal square root of symmetric positive 2x2 matrices.

    Uses sqrt(A) = (A + sqrt(det A) id) / sqrt(tr A + 2 sqrt(det A)).
    """
    t = A[..., 0, 0] + A[..., 1, 1]
    s = np.sqrt(det2(A))
    denom = np.sqrt(t + 2.0 * s)
    out = A.copy()
    out[..., 0, 0] += s
    out[..., 1, 1] += s
    return out / denom[..., None, None]


def random_orthogonal(rng, m, n):
    """Batch of m orthogonal n x n matrices via Householder QR."""
    G = rng.standard_normal((m, n, n))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diagonal(R, axis1=1, axis2=2))
    d[d == 0] = 1.0
    return Q * d[:, None, :]


def chunk_ranges(total, chunk):
    return [(i, min(i + chunk, total)) for i in range(0, total, chunk)]


def chunked_map(fn, total, threads=1, chunk=65536):
    """Apply ``fn(lo, hi)`` over fixed chunks of ``range(total)``.

    Chunk boundaries do not depend on the thread count and results are
    combined in chunk order, so the output list is identical for any
    ``threads`` value.
    """
    ranges = chunk_ranges(total, chunk)
    if threads <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]
