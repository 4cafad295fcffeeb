import numpy as np
import pytest

from minsurf import ineqlab, matcore
from minsurf.errors import DegenerateInputError, InvalidInputError

rng = np.random.default_rng(77)


def small_cfg(**kw):
    base = dict(Lam=2.0, K=4.0, eps3=0.5, L=1.0, n=3, samples=20000, seed=11)
    base.update(kw)
    return ineqlab.ScanConfig(**base)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def test_scan_config_validation():
    with pytest.raises(InvalidInputError):
        ineqlab.ScanConfig(K=1.5)
    with pytest.raises(InvalidInputError):
        ineqlab.ScanConfig(eps3=0.0)
    with pytest.raises(InvalidInputError):
        ineqlab.ScanConfig(n=1)
    with pytest.raises(InvalidInputError):
        ineqlab.ScanConfig(samples=0)


def test_rank_one_sample_properties():
    for _ in range(200):
        X = ineqlab.rank_one_sample(2.0, rng, n=3)
        assert np.linalg.norm(X) <= 2.0 + 1e-12
        # all 2x2 minors vanish
        for a in range(3):
            for b in range(a + 1, 3):
                m = X[a, 0] * X[b, 1] - X[a, 1] * X[b, 0]
                assert abs(m) < 1e-12


def test_qc_pair_sample_constraints():
    for _ in range(200):
        X, Y = ineqlab.qc_pair_sample(4.0, 0.5, 10.0, rng)
        for M in (X, Y):
            d = np.linalg.det(M)
            assert d >= 0.5 - 1e-12
            assert np.sum(M * M) <= 4.0 * d + 1e-9
            assert np.linalg.norm(M) <= 10.0 + 1e-9


def test_qc_pair_K2_is_conformal():
    # K = 2 forces |X|^2 = 2 det X, i.e. conformal matrices
    for _ in range(50):
        X, _ = ineqlab.qc_pair_sample(2.0, 0.5, 10.0, rng)
        assert np.sum(X * X) == pytest.approx(2.0 * np.linalg.det(X), rel=1e-12)


def test_qc_pair_rejects_bad_cap():
    with pytest.raises(InvalidInputError):
        ineqlab.qc_pair_sample(4.0, 0.5, 0.1, rng)


def test_small_minor_sampler_respects_bounds():
    for eps in (1e-3, 0.5):
        X, Y = ineqlab._small_minor_batch(rng, 2000, 2.0, eps, 3)
        for Z in (X, Y):
            assert np.linalg.norm(Z.reshape(len(Z), -1), axis=1).max() <= 2.0 + 1e-9
            mm = np.zeros(len(Z))
            for a in range(3):
                for b in range(a + 1, 3):
                    mm = np.maximum(
                        mm, np.abs(Z[:, a, 0] * Z[:, b, 1] - Z[:, a, 1] * Z[:, b, 0])
                    )
            assert mm.max() <= eps + 1e-9


# ---------------------------------------------------------------------------
# orthogonal split
# ---------------------------------------------------------------------------


def test_orthogonal_split_identities():
    for _ in range(500):
        Y = rng.standard_normal((2, 2))
        if np.linalg.norm(Y[:, 0]) < 1e-6 * np.linalg.norm(Y):
            continue
        Yo, Ye = ineqlab.orthogonal_split(Y)
        assert np.abs(Yo + Ye - Y).max() < 1e-12
        assert abs(np.sum(Yo * Ye)) < 1e-12
        assert abs(Yo[:, 0] @ Yo[:, 1]) < 1e-12
        assert np.linalg.det(Yo) == pytest.approx(np.linalg.det(Y), abs=1e-12)
        for t in (0.0, 0.25, 0.5, 1.0):
            d = np.linalg.det(Yo + t * Ye)
            assert d == pytest.approx(np.linalg.det(Y), abs=1e-12)


def test_orthogonal_split_trivial_and_degenerate():
    # orthogonal columns: Y_e = 0
    Y = np.array([[3.0, 0.0], [0.0, 2.0]])
    Yo, Ye = ineqlab.orthogonal_split(Y)
    assert np.abs(Ye).max() == 0.0
    assert np.abs(Yo - Y).max() == 0.0
    with pytest.raises(DegenerateInputError):
        ineqlab.orthogonal_split(np.array([[0.0, 1.0], [0.0, 2.0]]))


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def test_convexity_rank_one_scan():
    rep = ineqlab.convexity_rank_one_scan(small_cfg())
    assert rep.ok
    floor = (1.0 + 4.0) ** -1.5
    assert rep.stats["min_ratio"] >= floor - 1e-6
    assert rep.constants["lambda_est"] >= floor / 2.0 - 1e-6
    assert rep.stats["max_ratio"] <= 1.0 + 1e-9


def test_convexity_floor_across_gradient_bounds():
    for lam_bound in (0.5, 1.0, 2.0, 4.0):
        rep = ineqlab.convexity_rank_one_scan(small_cfg(Lam=lam_bound, samples=5000))
        floor = (1.0 + lam_bound**2) ** -1.5
        assert rep.stats["min_ratio"] >= floor - 1e-6


def test_hessian_rank_one_scan():
    rep = ineqlab.hessian_rank_one_scan(small_cfg(seed=5))
    assert rep.ok
    assert rep.stats["min_margin"] >= -1e-6


def test_small_det_scan_finds_violation_at_top():
    lam = 0.5 * 5.0**-1.5
    rep = ineqlab.small_det_convexity_scan(small_cfg(seed=2), lam=lam, levels=5)
    # the inequality genuinely fails for minor bound Lam^2 ...
    assert rep.stats["violations_at_Lam_sq"] > 0
    assert len(rep.violations) > 0
    # ... but holds on samples at the bisected level
    assert rep.constants["eps_est"] > 0.0


def test_small_det_scan_deterministic():
    lam = 0.04
    a = ineqlab.small_det_convexity_scan(small_cfg(seed=9), lam=lam, levels=3)
    b = ineqlab.small_det_convexity_scan(small_cfg(seed=9), lam=lam, levels=3)
    assert a.to_dict() == b.to_dict()


def test_small_det_violation_replay():
    # recorded violations must re-evaluate to violations
    lam = 0.5 * 5.0**-1.5
    rep = ineqlab.small_det_convexity_scan(small_cfg(seed=2), lam=lam, levels=1)
    for rec in rep.violations[:5]:
        X = np.asarray(rec["X"])
        Y = np.asarray(rec["Y"])
        num = np.sum(
            (matcore.area_gradient(X) - matcore.area_gradient(Y)) * (X - Y)
        )
        ratio = num / np.sum((X - Y) ** 2)
        assert ratio == pytest.approx(rec["ratio"], rel=1e-10)
        assert ratio < lam


def test_sptnull_scan_positive_delta():
    rep = ineqlab.sptnull_scan(small_cfg(samples=50000, seed=1), threads=2)
    assert rep.ok
    assert rep.constants["delta_est"] > 0.0
    assert rep.stats["chain_invariant_ok"]
    # stratified sub-scans are present
    for name in ("general", "orthogonal_columns", "M_zero"):
        assert f"delta_by_C1_{name}" in rep.stats


def test_sptnull_thread_invariance():
    a = ineqlab.sptnull_scan(small_cfg(samples=70000, seed=4), threads=1)
    b = ineqlab.sptnull_scan(small_cfg(samples=70000, seed=4), threads=4)
    assert a.to_dict() == b.to_dict()


def test_reduction_to_M0_check():
    for _ in range(20):
        X = rng.standard_normal((2, 2))
        M = rng.uniform(-0.7, 0.7, (1, 2))
        out = ineqlab.reduction_to_M0_check(X, M)
        assert out["identity_ok"]
        assert out["eig_bounds_ok"]
        assert out["eig_min"] >= 1.0 - 1e-12
        assert out["eig_max"] <= np.sqrt(1.0 + np.sum(M * M)) + 1e-12
