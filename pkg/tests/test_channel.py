import numpy as np
import pytest
from numpy.testing import assert_allclose

from cfobe.channel import (ChannelBatch, batch_samples, correlated_gaussian, covariance_factor,
                           draw_sample, worker_count)
from cfobe.scenario import make_drop

from conftest import small_config, synthetic_stats


def nlos_part(batch, st, which="ghat"):
    """Remove the (phase-rotated) LoS mean."""
    x = getattr(batch, which)
    return x - st.gbar[None] * np.exp(1j * batch.theta)[..., None]


class TestCorrelatedGaussian:
    def test_zero_covariance(self, rng):
        assert not correlated_gaussian(np.zeros((3, 3)), rng, 5).any()

    def test_identity_covariance(self, rng):
        x = correlated_gaussian(np.eye(2), rng, 100_000)
        cov = x.T @ x.conj() / x.shape[0]
        assert np.linalg.norm(cov - np.eye(2)) < 0.02

    def test_rank_one(self, rng):
        u = np.array([1.0, 1j, -1.0]) / np.sqrt(3)
        x = correlated_gaussian(2.0 * np.outer(u, u.conj()), rng, 50)
        for row in x:
            # every draw is a multiple of u (eigen noise ~1e-16 enters via a sqrt)
            assert np.linalg.norm(row - np.vdot(u, row) * u) < 1e-7 * np.linalg.norm(row)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="indefinite"):
            covariance_factor(np.diag([1.0, -0.5]))


class TestSampling:
    def test_pure_los_estimate_exact(self):
        gbar = np.array([[[1.0, 0.5j]], [[0.3, -0.2]]])           # (M=2, K=1, N=2)
        st = synthetic_stats(M=2, N=2, K=1, gbar=gbar, R=np.zeros((2, 1, 2, 2)))
        s = draw_sample(st, np.random.default_rng(0))
        assert_allclose(s.ghat, gbar * np.exp(1j * s.theta)[..., None], atol=1e-15)
        assert_allclose(s.g, s.ghat, atol=1e-15)

    def test_noiseless_estimate_exact(self):
        R = np.array([[[[2.0, 0.5], [0.5, 1.0]]]], dtype=complex)
        st = synthetic_stats(M=1, N=2, K=1, R=R, sigma2=1e-24)
        b = batch_samples(st, 20, 0, workers=1)
        assert np.abs(b.g - b.ghat).max() < 1e-8

    def test_copilot_regression(self):
        # N = 1, two UEs on one pilot: the estimate is the linear MMSE
        # regression of g on the pilot signal, so E{g ghat*} = E{|ghat|^2}
        # (unit regression coefficient) and the error is uncorrelated
        R = np.array([[[[1.0]], [[0.4]]]], dtype=complex)
        st = synthetic_stats(M=1, N=1, K=2, tau_p=1, R=R, sigma2=0.3)
        b = batch_samples(st, 100_000, 5, workers=1)
        g, gh = b.g[:, 0, :, 0], b.ghat[:, 0, :, 0]
        for k in range(2):
            coef = np.vdot(gh[:, k], g[:, k]) / np.vdot(gh[:, k], gh[:, k])
            assert abs(coef - 1) < 0.01
        assert_allclose(np.mean(np.abs(gh) ** 2, 0), st.Rhat[0, :, 0, 0].real, rtol=0.02)

    def test_phase_off(self):
        st = make_drop(small_config(phase_shifts=False))
        assert not batch_samples(st, 10, 1, workers=1).theta.any()

    def test_mean_of_rotated_estimate(self):
        st = make_drop(small_config(M=2, K=2, N=2, tau_p=1))
        b = batch_samples(st, 100_000, 2, workers=1)
        derot = b.ghat * np.exp(-1j * b.theta)[..., None]
        mean = derot.mean(0)
        # derotated estimate = gbar + CN(0, Rhat) noise
        sd = np.sqrt(np.real(np.diagonal(st.Rhat, axis1=-2, axis2=-1)) / b.count)
        assert np.all(np.abs(mean - st.gbar) <= 3 * np.sqrt(2) * sd + 1e-15)

    def test_uniform_phase(self):
        st = make_drop(small_config(M=2, K=2, N=1, tau_p=1))
        b = batch_samples(st, 100_000, 3, workers=1)
        m = np.exp(1j * b.theta).mean(0)
        sd = np.sqrt(0.5 / b.count)
        assert np.all(np.abs(m.real) <= 3 * sd) and np.all(np.abs(m.imag) <= 3 * sd)

    def test_error_covariances(self):
        st = make_drop(small_config())
        b = batch_samples(st, 40_000, 4, workers=1)
        est, err = nlos_part(b, st), b.error
        for m in range(st.M):
            for k in range(st.K):
                for X, ref in ((est, st.Rhat), (err, st.C)):
                    x = X[:, m, k]
                    cov = x.T @ x.conj() / b.count
                    rel = np.linalg.norm(cov - ref[m, k]) / np.linalg.norm(ref[m, k])
                    assert rel < 0.05
                cross = err[:, m, k].T @ est[:, m, k].conj() / b.count
                scale = np.sqrt(np.linalg.norm(st.C[m, k]) * np.linalg.norm(st.Rhat[m, k]))
                assert np.linalg.norm(cross) < 0.05 * scale


class TestBatches:
    def test_same_seed_identical(self, stats_phase):
        a = batch_samples(stats_phase, 600, 9, (1, 2), workers=1)
        b = batch_samples(stats_phase, 600, 9, (1, 2), workers=1)
        assert np.array_equal(a.g, b.g) and np.array_equal(a.ghat, b.ghat)

    def test_streams_differ(self, stats_phase):
        a = batch_samples(stats_phase, 10, 9, (1,), workers=1)
        b = batch_samples(stats_phase, 10, 9, (2,), workers=1)
        assert not np.array_equal(a.g, b.g)

    def test_worker_count_independent(self, stats_phase):
        a = batch_samples(stats_phase, 700, 9, workers=1)
        b = batch_samples(stats_phase, 700, 9, workers=3)
        assert np.array_equal(a.g, b.g) and np.array_equal(a.theta, b.theta)

    def test_worker_env(self, monkeypatch):
        monkeypatch.setenv("CFOBE_WORKERS", "5")
        assert worker_count() == 5
        monkeypatch.setenv("CFOBE_WORKERS", "x")
        assert worker_count() == 1

    def test_shapes_and_views(self, stats_phase):
        st = stats_phase
        b = batch_samples(st, 7, 0, workers=1)
        assert b.g.shape == (7, st.M, st.K, st.N) and len(b) == 7
        col = b.collective("ghat")
        assert col.shape == (7, st.K, st.M * st.N)
        assert_allclose(col[3, 1, st.N:2 * st.N], b.ghat[3, 1, 1])
        assert_allclose(b[3].collective("ghat"), col[3])
        assert b[2:5].count == 3

    def test_dump_roundtrip(self, stats_phase, tmp_path):
        b = batch_samples(stats_phase, 12, 0, workers=1)
        path = tmp_path / "batch.bin"
        b.dump(path)
        c = ChannelBatch.load(path)
        assert_allclose(c.g, b.g.astype(np.complex64))
        assert_allclose(c.ghat, b.ghat.astype(np.complex64))
        raw = path.read_bytes()
        assert raw[:4] == b"CFCB"
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            ChannelBatch.load(path)

    def test_bad_count(self, stats_phase):
        with pytest.raises(ValueError):
            batch_samples(stats_phase, 0, 0)
