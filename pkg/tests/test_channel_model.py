import numpy as np
import pytest

from rsma_hfpi.channel_model import (CorrelationModel, ImperfectChannel, build_one_ring_covariance,
                                     dump_channels, karhunen_loeve_factor, load_channels,
                                     one_ring_factors, sample_iid_rayleigh, sample_imperfect_csit,
                                     steering_vector)
from rsma_hfpi.errors import ParameterError, StructuralError


def test_rayleigh_moments():
    # 10^4 draws of a 4x4 matrix
    draws = np.stack([sample_iid_rayleigh(4, 4, 1, 1, 100, seed=s).H for s in range(2500)])
    assert abs(np.mean(np.abs(draws) ** 2) - 1) < 0.05
    assert abs(np.var(draws.real) - 0.5) < 0.025
    assert abs(np.mean(draws)) < 0.05


def test_rayleigh_deterministic():
    a = sample_iid_rayleigh(1, 1, seed=11).H
    b = sample_iid_rayleigh(1, 1, seed=11).H
    assert a.tobytes() == b.tobytes()
    assert sample_iid_rayleigh(1, 1, seed=12).H.tobytes() != a.tobytes()


def test_rayleigh_column_norms_large_L():
    H = sample_iid_rayleigh(512, 3, seed=5).H
    np.testing.assert_allclose(np.linalg.norm(H, axis=0) ** 2 / 512, 1.0, rtol=0.1)


@pytest.mark.parametrize("kw", [dict(L=0, K=2), dict(L=2, K=0), dict(L=2, K=2, noise_powers=-1),
                                dict(L=2, K=2, power_budget=0.0), dict(L=2, K=2, weights=0)])
def test_rayleigh_bad_params(kw):
    with pytest.raises(ParameterError):
        sample_iid_rayleigh(**kw)


def test_one_ring_unit_diagonal_and_trace():
    m = CorrelationModel([0.3, -0.7], angle_spread=np.pi / 18)
    for k in range(2):
        R = build_one_ring_covariance(m, 8, k)
        assert np.all(np.diag(R) == 1)
        np.testing.assert_allclose(R, R.conj().T, atol=0)
        ev = np.linalg.eigvalsh(R)
        assert abs(ev.sum() - 8) < 1e-8
        assert ev.min() > -1e-10


def test_one_ring_against_high_precision_quadrature():
    # reference lags from mpmath.quad at 30 digits, theta=0.3, spread=pi/18, spacing=1/2
    ref = [0.57570311319445118 + 0.7621562042135328j,
           -0.22727433942561292 + 0.79599110979750341j,
           -0.59624161463725884 + 0.22746951983389292j]
    R = build_one_ring_covariance(CorrelationModel([0.3], np.pi / 18, 0.5), 4, 0)
    np.testing.assert_allclose(R[1:, 0], ref, atol=1e-10)
    np.testing.assert_allclose(R[0, 1:], np.conj(ref), atol=1e-10)


def test_one_ring_zero_spread_limit():
    th = 0.4
    R = build_one_ring_covariance(CorrelationModel([th], angle_spread=1e-7), 6, 0)
    a = steering_vector(6, th)
    np.testing.assert_allclose(R, np.outer(a, a.conj()), atol=1e-8)


def test_kl_identity():
    U, lam = karhunen_loeve_factor(np.eye(5), 0.0)
    np.testing.assert_allclose(lam, 1.0)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(5), atol=1e-12)


def test_kl_rank_one(rng):
    h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    U, lam = karhunen_loeve_factor(np.outer(h, h.conj()))
    assert lam.shape == (1,)
    assert abs(lam[0] - np.vdot(h, h).real) < 1e-10
    assert abs(abs(np.vdot(U[:, 0], h / np.linalg.norm(h))) - 1) < 1e-12


def test_kl_random_reconstruction(rng):
    A = rng.standard_normal((7, 4)) + 1j * rng.standard_normal((7, 4))
    R = A @ A.conj().T
    U, lam = karhunen_loeve_factor(R)
    assert np.linalg.norm(U.conj().T @ U - np.eye(U.shape[1])) < 1e-8
    assert np.linalg.norm((U * lam) @ U.conj().T - R) < 1e-6


def test_kl_rejects_non_hermitian():
    with pytest.raises(StructuralError):
        karhunen_loeve_factor(np.array([[1.0, 2.0], [0.0, 1.0]]))


def _factors(L=6, K=3):
    return one_ring_factors(CorrelationModel(np.linspace(-1, 1, K), np.pi / 12), L)


def test_imperfect_kappa_zero():
    im = sample_imperfect_csit(_factors(), 0.0, seed=3)
    assert np.all(im.error_covariances == 0)
    np.testing.assert_array_equal(im.H_hat, im.H_true)


def test_imperfect_kappa_one():
    fac = _factors()
    im = sample_imperfect_csit(fac, 1.0, seed=3)
    for k, (U, lam) in enumerate(fac):
        np.testing.assert_allclose(im.error_covariances[k], 2 * (U * lam) @ U.conj().T, atol=1e-12)


def test_imperfect_error_covariance_monte_carlo():
    fac = _factors(L=4, K=2)
    kappa = 0.6
    n = 100_000
    rng = np.random.default_rng(0)
    U, lam = fac[0]
    root = U * np.sqrt(lam)
    s = np.sqrt(1 - kappa ** 2)
    g = (rng.standard_normal((root.shape[1], n)) + 1j * rng.standard_normal((root.shape[1], n))) / np.sqrt(2)
    ge = (rng.standard_normal((root.shape[1], n)) + 1j * rng.standard_normal((root.shape[1], n))) / np.sqrt(2)
    e = root @ ((1 - s) * g - kappa * ge)
    emp = e @ e.conj().T / n
    Phi = sample_imperfect_csit(fac, kappa, seed=0).error_covariances[0]
    assert np.linalg.norm(emp - Phi) / np.linalg.norm(Phi) < 0.05


def test_imperfect_phi_psd_and_monotone_in_kappa():
    fac = _factors()
    prev = None
    for kappa in np.linspace(0, 1, 6):
        Phi = sample_imperfect_csit(fac, kappa, seed=1).error_covariances
        for P in Phi:
            assert np.max(np.abs(P - P.conj().T)) < 1e-10
            assert np.linalg.eigvalsh(P).min() > -1e-8
        if prev is not None:
            assert all(np.linalg.eigvalsh(a - b).min() > -1e-10 for a, b in zip(Phi, prev))
        prev = Phi


def test_imperfect_deterministic_and_bad_kappa():
    fac = _factors()
    a = sample_imperfect_csit(fac, 0.5, seed=9)
    b = sample_imperfect_csit(fac, 0.5, seed=9)
    assert a.H_hat.tobytes() == b.H_hat.tobytes()
    with pytest.raises(ParameterError):
        sample_imperfect_csit(fac, 1.5, seed=0)
    with pytest.raises(StructuralError):
        ImperfectChannel(np.zeros((3, 2)), np.zeros((2, 2, 2)), 0.1)


def test_channel_dump_roundtrip(tmp_path):
    recs = [(s, sample_iid_rayleigh(3, 2, seed=s).H) for s in range(3)]
    path = tmp_path / "ch.jsonl"
    dump_channels(path, recs)
    back = load_channels(path)
    for (s0, H0), (s1, H1) in zip(recs, back):
        assert s0 == s1
        np.testing.assert_array_equal(H0, H1)
