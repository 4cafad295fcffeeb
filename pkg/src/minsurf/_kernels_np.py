"""Pure-numpy batch kernels for the area-integrand algebra.

These mirror the compiled kernels in ``_kernels.pyx`` operation-for-operation
(the accumulation order over the codimension index is the same explicit loop),
so both backends produce identical floating point results.

All kernels take a batch of gradient matrices ``Z`` of shape ``(m, n, 2)``.
"""

import numpy as np


def _column_products(Z):
    """Accumulate |Z^1|^2, |Z^2|^2 and (Z^1, Z^2) with a fixed loop order."""
    m, n, _ = Z.shape
    n1 = np.zeros(m)
    n2 = np.zeros(m)
    p = np.zeros(m)
    for i in range(n):
        n1 += Z[:, i, 0] * Z[:, i, 0]
        n2 += Z[:, i, 1] * Z[:, i, 1]
        p += Z[:, i, 0] * Z[:, i, 1]
    return n1, n2, p


def area_batch(Z):
    """Graph-area integrand per sample, shape (m,)."""
    n1, n2, p = _column_products(Z)
    return np.sqrt(1.0 + n1 + n2 + n1 * n2 - p * p)


def inner_stress_batch(Z):
    """Inner-variation stress matrix per sample, shape (m, 2, 2)."""
    n1, n2, p = _column_products(Z)
    a = np.sqrt(1.0 + n1 + n2 + n1 * n2 - p * p)
    B = np.empty((Z.shape[0], 2, 2))
    B[:, 0, 0] = (1.0 + n2) / a
    B[:, 0, 1] = -p / a
    B[:, 1, 0] = -p / a
    B[:, 1, 1] = (1.0 + n1) / a
    return B


def area_gradient_batch(Z):
    """Gradient of the area integrand per sample, shape (m, n, 2).

    Uses the product form Z B(Z), which expands to the cofactor sum of the
    explicit derivative formula.
    """
    n1, n2, p = _column_products(Z)
    a = np.sqrt(1.0 + n1 + n2 + n1 * n2 - p * p)
    out = np.empty_like(Z)
    for i in range(Z.shape[1]):
        out[:, i, 0] = (Z[:, i, 0] * (1.0 + n2) - Z[:, i, 1] * p) / a
        out[:, i, 1] = (Z[:, i, 1] * (1.0 + n1) - Z[:, i, 0] * p) / a
    return out


def minor_max_batch(Z):
    """Largest |det Z^{ab}| over row pairs a < b, shape (m,)."""
    m, n, _ = Z.shape
    out = np.zeros(m)
    for a in range(n):
        for b in range(a + 1, n):
            d = np.abs(Z[:, a, 0] * Z[:, b, 1] - Z[:, a, 1] * Z[:, b, 0])
            out = np.maximum(out, d)
    return out
