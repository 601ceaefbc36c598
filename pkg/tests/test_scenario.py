import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from cfobe.scenario import (NetworkConfig, assign_pilots, build_statistics, dbm_to_watt,
                            geometry_from_positions, load_config_file, local_scattering_R,
                            los_vector, make_drop, pathloss, place_network, rician_factor)

from conftest import small_config


class TestConfig:
    def test_defaults(self):
        cfg = NetworkConfig()
        assert (cfg.M, cfg.N, cfg.K, cfg.tau_p, cfg.tau_c) == (20, 4, 20, 1, 200)
        assert np.isclose(cfg.sigma2, 10 ** (-12.4))
        assert np.isclose(cfg.prelog, 199 / 200)

    @pytest.mark.parametrize("kw", [dict(M=0), dict(tau_p=0), dict(tau_p=201), dict(p=0.0),
                                    dict(area_side=-1.0), dict(pilot_policy="random")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            NetworkConfig(**kw)

    def test_dict_roundtrip(self):
        cfg = NetworkConfig(M=3, rician_range=math.inf)
        d = cfg.to_dict()
        assert d["rician_range"] == "infinite"
        assert NetworkConfig.from_dict(d) == cfg

    def test_from_dict_dbm_and_unknown(self):
        cfg = NetworkConfig.from_dict({"sigma2_dbm": -94})
        assert np.isclose(cfg.sigma2, dbm_to_watt(-94))
        with pytest.raises(ValueError, match="unknown"):
            NetworkConfig.from_dict({"bogus": 1})

    def test_toml_file(self, tmp_path):
        f = tmp_path / "net.toml"
        f.write_text('M = 5\nrician_range = "infinite"\n')
        cfg = NetworkConfig.from_dict(load_config_file(f))
        assert cfg.M == 5 and math.isinf(cfg.rician_range)


class TestGeometry:
    def test_colocated_height(self):
        g = geometry_from_positions([[5.0, 5.0]], [[5.0, 5.0]], 1000.0, 11.0)
        assert np.isclose(g.distance[0, 0], 11.0)

    def test_wraparound(self):
        g = geometry_from_positions([[0.0, 0.0]], [[990.0, 0.0]], 1000.0, 0.0)
        assert np.isclose(g.distance[0, 0], 10.0)

    def test_nine_image_oracle(self):
        side, h = 1000.0, 11.0
        for seed in range(100):
            cfg = NetworkConfig(M=4, K=3, seed=seed)
            geo = place_network(cfg)
            shifts = [np.array([a, b]) * side for a, b in itertools.product((-1, 0, 1), repeat=2)]
            for m, k in itertools.product(range(4), range(3)):
                planar = min(np.linalg.norm(geo.ue_pos[k] + s - geo.ap_pos[m]) for s in shifts)
                assert np.isclose(geo.distance[m, k], math.hypot(planar, h), rtol=1e-12)


class TestLargeScale:
    def test_rician_factor_values(self):
        assert np.isclose(rician_factor(100.0), 10.0)
        assert np.isclose(rician_factor(1300.0 / 3.0), 1.0)

    def test_rician_factor_monotone(self):
        assert np.all(np.diff(rician_factor(np.linspace(1, 2000, 500))) < 0)

    def test_pathloss_values(self):
        assert np.isclose(10 * np.log10(pathloss(1.0)), -30.18)
        assert np.isclose(10 * np.log10(pathloss(10.0)), -56.18)

    def test_pathloss_monotone(self):
        assert np.all(np.diff(pathloss(np.linspace(1, 2000, 500))) < 0)


class TestArrayModels:
    def test_los_broadside(self):
        assert_allclose(los_vector(0.25, 0.0, 4), 0.5 * np.ones(4))

    def test_los_single_antenna(self):
        assert_allclose(los_vector(0.3, 1.1, 1), [np.sqrt(0.3)])

    def test_los_norm(self, rng):
        for a in rng.uniform(-np.pi, np.pi, 10):
            assert np.isclose(np.linalg.norm(los_vector(0.7, a, 5)) ** 2, 5 * 0.7)

    def test_scattering_single_antenna(self):
        assert_allclose(local_scattering_R(0.4, 0.3, 0.26, 1), [[0.4]])

    def test_scattering_zero_spread_rank_one(self):
        R = local_scattering_R(2.0, 0.5, 0.0, 4)
        a = np.exp(1j * np.pi * np.arange(4) * np.sin(0.5))
        assert_allclose(R, 2.0 * np.outer(a, a.conj()), atol=1e-12)
        assert np.linalg.matrix_rank(R, tol=1e-9) == 1

    def test_scattering_against_exact_integral(self):
        std = math.radians(15)
        R = local_scattering_R(1.0, 0.0, std, 2)
        assert np.isclose(abs(R[0, 1]), math.exp(-(math.pi * std) ** 2 / 2), rtol=1e-12)
        # exact model: E over a Gaussian angular deviation of exp(j pi sin(delta))
        pdf = lambda d: math.exp(-d ** 2 / (2 * std ** 2)) / math.sqrt(2 * math.pi) / std
        re = integrate.quad(lambda d: math.cos(math.pi * math.sin(d)) * pdf(d), -20 * std, 20 * std)[0]
        im = integrate.quad(lambda d: math.sin(math.pi * math.sin(d)) * pdf(d), -20 * std, 20 * std)[0]
        assert abs(abs(R[0, 1]) - math.hypot(re, im)) / math.hypot(re, im) < 0.05

    def test_scattering_psd_and_trace(self):
        for std in (0.1, 0.5, 1.5):
            R = local_scattering_R(3.0, 0.7, std, 6)
            assert np.linalg.eigvalsh(R).min() >= -1e-10 * 3.0
            assert np.isclose(np.trace(R).real / 6, 3.0, rtol=1e-9)


class TestPilots:
    def test_single_pilot(self):
        pa = assign_pilots(6, 1, "greedy", np.ones((2, 6)))
        assert pa.same_pilot().all()

    def test_orthogonal(self):
        pa = assign_pilots(5, 5, "greedy", np.random.default_rng(0).uniform(size=(3, 5)))
        assert_allclose(pa.same_pilot(), np.eye(5, dtype=bool))
        for k in range(5):
            assert list(pa.copilots(k)) == [k]

    def test_round_robin(self):
        # pilot indices are 0-based
        assert list(assign_pilots(5, 2, "round-robin").index) == [0, 1, 0, 1, 0]

    def test_greedy_needs_gains(self):
        with pytest.raises(ValueError):
            assign_pilots(4, 2, "greedy")


class TestStatistics:
    def test_invariants(self, stats_phase):
        st = stats_phase
        assert_allclose(st.beta_los + st.beta_nlos, st.beta, rtol=1e-12)
        assert_allclose(st.beta_los, st.kappa / (st.kappa + 1) * st.beta, rtol=1e-12)
        tr = np.trace(st.R, axis1=-2, axis2=-1).real / st.N
        assert_allclose(tr, st.beta_nlos, rtol=1e-9)
        err = np.linalg.norm(st.Rhat + st.C - st.R, axis=(-2, -1))
        assert np.all(err <= 1e-9 * np.linalg.norm(st.R, axis=(-2, -1)))
        for X in (st.R, st.Rhat, st.C):
            lam = np.linalg.eigvalsh(X)
            assert np.all(lam.min(-1) >= -1e-10 * st.beta_nlos)
        assert np.all(np.linalg.eigvalsh(st.Psi) > 0)

    def test_pilot_gram(self, stats_phase):
        st = stats_phase
        for m in range(st.M):
            for k in range(st.K):
                cop = st.pilots.copilots(k)
                Psi = sum(st.p[l] * st.tau_p * st.R[m, l] for l in cop) + st.sigma2 * np.eye(st.N)
                assert np.linalg.norm(st.Psi[m, k] - Psi) <= 1e-12 * np.linalg.norm(Psi)
                for l in cop:
                    assert_allclose(st.Psi[m, l], st.Psi[m, k])

    def test_single_ue(self):
        cfg = NetworkConfig(M=2, N=3, K=1, tau_p=1, seed=4)
        st = make_drop(cfg)
        for m in range(2):
            assert_allclose(st.Psi[m, 0], st.p[0] * st.R[m, 0] + st.sigma2 * np.eye(3),
                            rtol=1e-12)

    def test_no_los_links(self):
        st = make_drop(small_config(rician_range=0.0))
        assert not st.gbar.any() and not st.beta_los.any()

    def test_partial_los(self):
        st = make_drop(small_config(rician_range=150.0))
        off = ~st.has_los
        assert not st.gbar[off].any()
        assert np.all(st.has_los == (st.geometry.distance <= 150.0))

    def test_deterministic(self):
        a, b = make_drop(small_config()), make_drop(small_config())
        assert np.array_equal(a.R, b.R) and np.array_equal(a.gbar, b.gbar)
        c = make_drop(small_config(), drop=1)
        assert not np.array_equal(a.geometry.ue_pos, c.geometry.ue_pos)

    def test_to_dict_is_json(self, stats_phase):
        import json
        json.dumps(stats_phase.to_dict())

    def test_supplied_statistics(self):
        cfg = NetworkConfig(M=1, N=2, K=2, tau_p=1)
        pilots = assign_pilots(2, 1, "round-robin")
        R = np.broadcast_to(np.eye(2, dtype=complex), (1, 2, 2, 2))
        st = build_statistics(None, pilots, cfg, gbar=np.zeros((1, 2, 2)), R=R)
        assert_allclose(st.Rhat + st.C, R)
