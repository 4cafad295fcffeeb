import numpy as np
import pytest

from minsurf import matcore
from minsurf.errors import DegenerateInputError, InvalidInputError
from minsurf.utils import rot2

rng = np.random.default_rng(20260825)


# ---------------------------------------------------------------------------
# area integrand
# ---------------------------------------------------------------------------


def test_area_pinned_values():
    assert matcore.area(np.zeros((2, 2))) == 1.0
    # rank-one diag(3, 0): sqrt(1 + 9) with all minors zero
    assert matcore.area(np.diag([3.0, 0.0])) == pytest.approx(np.sqrt(10.0), rel=1e-15)
    # identity: sqrt(1 + 2 + 1) = 2
    assert matcore.area(np.eye(2)) == pytest.approx(2.0, rel=1e-15)


def test_area_brute_force_oracle():
    # independent evaluation via explicit minor enumeration
    for n in (2, 3, 5):
        for _ in range(50):
            Z = rng.uniform(-3, 3, (n, 2))
            s = 1.0 + np.sum(Z * Z)
            for a in range(n):
                for b in range(a + 1, n):
                    s += (Z[a, 0] * Z[b, 1] - Z[a, 1] * Z[b, 0]) ** 2
            assert matcore.area(Z) == pytest.approx(np.sqrt(s), rel=1e-14)


def test_area_gram_determinant_oracle():
    # A(Z)^2 = det(id + Z^T Z)
    for _ in range(50):
        Z = rng.uniform(-3, 3, (4, 2))
        g = np.eye(2) + Z.T @ Z
        assert matcore.area(Z) ** 2 == pytest.approx(np.linalg.det(g), rel=1e-13)


def test_area_lower_bound():
    for _ in range(100):
        Z = rng.uniform(-1, 1, (3, 2))
        assert matcore.area(Z) >= 1.0


def test_area_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        matcore.area(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        matcore.area(np.array([[np.nan, 0.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# gradient and inner stress
# ---------------------------------------------------------------------------


def test_gradient_pinned_value():
    # Z = diag(1, 2): A = sqrt(10), DA = diag(5, 4)/sqrt(10)
    DA = matcore.area_gradient(np.diag([1.0, 2.0]))
    assert np.allclose(DA * np.sqrt(10.0), np.diag([5.0, 4.0]), atol=1e-14)


def test_gradient_matches_finite_differences():
    h = 1e-6
    for n in (2, 3, 5):
        for _ in range(20):
            Z = rng.uniform(-2, 2, (n, 2))
            DA = matcore.area_gradient(Z)
            for i in range(n):
                for j in range(2):
                    E = np.zeros_like(Z)
                    E[i, j] = h
                    fd = (matcore.area(Z + E) - matcore.area(Z - E)) / (2 * h)
                    assert DA[i, j] == pytest.approx(fd, rel=1e-7, abs=1e-9)


def test_inner_stress_pinned_value():
    # Z = diag(1, 2): B = diag(5, 2)/sqrt(10)
    B = matcore.inner_stress(np.diag([1.0, 2.0]))
    assert np.allclose(B * np.sqrt(10.0), np.diag([5.0, 2.0]), atol=1e-14)


def test_inner_stress_metric_oracle():
    # B = sqrt(det g) g^{-1} with g = id + Z^T Z
    for n in (2, 3, 5):
        for _ in range(50):
            Z = rng.uniform(-2, 2, (n, 2))
            g = np.eye(2) + Z.T @ Z
            ref = np.sqrt(np.linalg.det(g)) * np.linalg.inv(g)
            assert np.allclose(matcore.inner_stress(Z), ref, atol=1e-12)


def test_inner_stress_definition_oracle():
    # B(Z) = A(Z) id - Z^T DA(Z)
    for _ in range(50):
        Z = rng.uniform(-2, 2, (3, 2))
        ref = matcore.area(Z) * np.eye(2) - Z.T @ matcore.area_gradient(Z)
        assert np.allclose(matcore.inner_stress(Z), ref, atol=1e-12)


def test_inner_stress_unimodular():
    for _ in range(100):
        Z = rng.uniform(-4, 4, (3, 2))
        B = matcore.inner_stress(Z)
        assert np.linalg.det(B) == pytest.approx(1.0, rel=1e-12)
        assert B[0, 1] == pytest.approx(B[1, 0], abs=1e-14)


def test_cof2_and_metric():
    M = rng.uniform(-2, 2, (2, 2))
    C = matcore.cof2(M)
    assert np.allclose(M @ C, np.linalg.det(M) * np.eye(2), atol=1e-14)
    Z = rng.uniform(-2, 2, (4, 2))
    assert np.allclose(matcore.metric(Z), np.eye(2) + Z.T @ Z, atol=1e-14)


def test_qc_distortion():
    assert matcore.qc_distortion(np.eye(2)) == pytest.approx(2.0)
    assert matcore.qc_distortion(np.diag([2.0, 1.0])) == pytest.approx(2.5)
    assert matcore.qc_distortion(np.diag([1.0, 0.0])) == np.inf


# ---------------------------------------------------------------------------
# 2x2 SVD
# ---------------------------------------------------------------------------


def test_svd2_reconstruction_random():
    worst = 0.0
    for _ in range(500):
        M = rng.uniform(-5, 5, (2, 2))
        r = matcore.svd2(M)
        worst = max(worst, np.abs(r.reconstruct() - M).max())
        assert r.s[0] >= abs(r.s[1]) >= 0 or r.s[1] >= 0
        assert np.linalg.det(r.U) == pytest.approx(1.0, abs=1e-12)
        # compare singular values with the library
        ref = np.linalg.svd(M, compute_uv=False)
        assert np.allclose(np.sort(np.abs(r.s))[::-1], ref, atol=1e-12)
    assert worst < 1e-12


def test_svd2_special_cases():
    r = matcore.svd2(np.eye(2))
    assert np.allclose(r.s, [1.0, 1.0])
    r = matcore.svd2(rot2(0.7))
    assert np.allclose(r.s, [1.0, 1.0], atol=1e-15)
    # symmetric positive definite: U == V
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    r = matcore.svd2(A)
    assert np.allclose(r.U, r.V, atol=1e-12)
    # rank deficient
    r = matcore.svd2(np.array([[1.0, 2.0], [2.0, 4.0]]))
    assert r.s[1] == pytest.approx(0.0, abs=1e-14)
    assert r.s[0] == pytest.approx(5.0, rel=1e-14)


# ---------------------------------------------------------------------------
# finite-difference Hessian
# ---------------------------------------------------------------------------


def test_hessian_fd_at_zero():
    # D^2 A(0) = id on directions: value 1 for any unit W
    W = rng.standard_normal((3, 2))
    W /= np.linalg.norm(W)
    assert matcore.area_hessian_fd(np.zeros((3, 2)), W) == pytest.approx(1.0, abs=1e-7)


def test_hessian_fd_pinned_value():
    # at diag(3, 0) along e1 x e1: (1 + 9)^{-3/2}
    Z = np.diag([3.0, 0.0])
    W = np.zeros((2, 2))
    W[0, 0] = 1.0
    val = matcore.area_hessian_fd(Z, W)
    assert val == pytest.approx(10.0**-1.5, rel=1e-7)


def test_hessian_fd_validates_input():
    Z = np.zeros((2, 2))
    with pytest.raises(InvalidInputError):
        matcore.area_hessian_fd(Z, 2.0 * np.eye(2))  # not unit norm
    with pytest.raises(InvalidInputError):
        matcore.area_hessian_fd(Z, np.eye(2) / np.sqrt(2.0), h=0.1)


def test_hessian_negative_direction_exists():
    # near a conformal rank-two point the integrand is not convex
    Z = np.diag([np.sqrt(2.0), np.sqrt(2.0)])
    W = np.diag([1.0, -1.0]) / np.sqrt(2.0)
    assert matcore.area_hessian_fd(Z, W) == pytest.approx(-1.0 / 3.0, rel=1e-6)


# ---------------------------------------------------------------------------
# identity suite and boundedness scan
# ---------------------------------------------------------------------------


def test_verify_identities_clean():
    rep = matcore.verify_identities(n=3, samples=20000, seed=7)
    assert rep.ok
    assert rep.samples == 20000
    assert set(rep.max_deviation) == set(matcore.IDENTITY_ITEMS)
    assert max(rep.max_deviation.values()) < 1e-9


def test_verify_identities_deterministic_across_threads():
    a = matcore.verify_identities(n=2, samples=70000, seed=3, threads=1)
    b = matcore.verify_identities(n=2, samples=70000, seed=3, threads=4)
    assert a.to_dict() == b.to_dict()


def test_verify_identities_empty():
    rep = matcore.verify_identities(n=2, samples=0, seed=0)
    assert rep.ok and rep.samples == 0


def test_boundedness_scan_small():
    rep = matcore.boundedness_scan(n=3, K=4.0, L=1.0, seed=0, samples_per_decade=2000)
    assert abs(rep.slope_B) < 0.1
    assert abs(rep.slope_DB) < 0.1
    assert max(rep.sup_B) < 50.0
    assert max(rep.sup_DB_scaled) < 100.0


def test_stack_blocks_and_block_stress():
    X = rng.uniform(-1, 1, (2, 2))
    Y = rng.uniform(-1, 1, (2, 2))
    Z = matcore.stack_blocks(X, Y)
    assert Z.shape == (4, 2)
    assert np.allclose(
        matcore.inner_stress_blocks(X, Y), matcore.inner_stress(Z), atol=1e-14
    )
