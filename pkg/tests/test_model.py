import numpy as np
import pytest

from wncc import model
from wncc.model import ConfigError

from conftest import write_scenario


class TestLoadConfig:
    def test_reference_scenario(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg")
        topo, cfg = model.load_config(path)
        assert (topo.num_bs, topo.num_plants, topo.num_antennas) == (2, 16, 32)
        assert np.allclose(cfg.downlink_power_budget_w, 5.0)
        assert cfg.bandwidth_hz == 10e6
        assert np.allclose(topo.bs_positions, [[30, 30], [70, 70]])

    def test_zero_plants_names_field(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg", num_plants=0)
        with pytest.raises(ConfigError, match="num_plants"):
            model.load_config(path)

    def test_default_outage_threshold_recorded(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg", outage_threshold=None)
        _, cfg = model.load_config(path)
        assert cfg.outage_threshold == 1e-3
        assert "outage_threshold" in cfg.defaulted_keys

    def test_default_pathloss_exponent(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg", pathloss_exp=None)
        _, cfg = model.load_config(path)
        assert cfg.pathloss_exp == 3.0
        assert "pathloss_exp" in cfg.defaulted_keys

    def test_missing_mandatory_key(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg", bandwidth_hz=None)
        with pytest.raises(ConfigError, match="bandwidth_hz"):
            model.load_config(path)

    def test_fixed_positions_wrong_count(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg", num_plants=3,
                              plant_positions_mode="fixed",
                              plant_positions_m="1,1; 2,2")
        with pytest.raises(ConfigError, match="plant_positions_m"):
            model.load_config(path)

    def test_parse_error_names_key(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg", cpu_freq_hz="fast")
        with pytest.raises(ConfigError, match="cpu_freq_hz"):
            model.load_config(path)

    def test_overrides(self, tmp_path):
        path = write_scenario(tmp_path / "scn.cfg")
        _, cfg = model.load_config(path, {"cpu_freq_hz": 0.3e9})
        assert np.allclose(cfg.cpu_freq_hz, 0.3e9)


class TestChannels:
    def test_same_seed_identical(self, tiny_scenario):
        topo, cfg, _ = tiny_scenario
        a = model.generate_channels(topo, cfg, seed=7)
        b = model.generate_channels(topo, cfg, seed=7)
        assert np.array_equal(a.uplink, b.uplink)
        assert np.array_equal(a.downlink, b.downlink)

    def test_different_seed_differs(self, tiny_scenario):
        topo, cfg, _ = tiny_scenario
        a = model.generate_channels(topo, cfg, seed=7)
        b = model.generate_channels(topo, cfg, seed=8)
        assert not np.array_equal(a.uplink, b.uplink)

    def test_monte_carlo_mean_matches_pathloss(self):
        # E[|g|^2]/N against the closed-form path gain over 1e4 draws
        topo = model.Topology(1, 1, 4, np.array([[0.0, 0.0]]), np.array([[30.0, 40.0]]))
        cfg = _cfg_for(topo)
        norms = []
        for seed in range(10_000):
            ch = model.generate_channels(topo, cfg, seed)
            norms.append(np.linalg.norm(ch.uplink[0, 0]) ** 2)
        per_antenna = np.mean(norms) / topo.num_antennas
        expected = cfg.pathgain(50.0)
        assert abs(per_antenna / expected - 1.0) < 0.03

    def test_colocated_plant_clamps_to_reference(self):
        topo = model.Topology(1, 1, 64, np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]))
        cfg = _cfg_for(topo)
        assert cfg.pathgain(0.0) == pytest.approx(cfg.pathloss_ref)
        ch = model.generate_channels(topo, cfg, seed=0)
        per_antenna = np.linalg.norm(ch.uplink[0, 0]) ** 2 / topo.num_antennas
        assert abs(per_antenna / cfg.pathloss_ref - 1.0) < 0.5  # single draw, loose

    def test_reciprocal_flag(self, tiny_scenario):
        topo, cfg, _ = tiny_scenario
        ch = model.generate_channels(topo, cfg)
        assert ch.downlink is ch.uplink
        import dataclasses
        cfg2 = dataclasses.replace(cfg, reciprocal_channels=False)
        ch2 = model.generate_channels(topo, cfg2)
        assert not np.array_equal(ch2.downlink, ch2.uplink)


class TestEffectiveGains:
    def test_diagonal_is_squared_norm(self, tiny_scenario):
        topo, cfg, gains = tiny_scenario
        ch = model.generate_channels(topo, cfg)
        for m in range(topo.num_bs):
            for k in range(topo.num_plants):
                n2 = np.linalg.norm(ch.uplink[m, k]) ** 2
                assert gains.uplink_gain[m, k, k] == pytest.approx(n2, rel=1e-12)
                assert gains.downlink_gain[m, k, k] == pytest.approx(n2, rel=1e-12)

    def test_orthogonal_channels_zero_gain(self):
        up = np.zeros((1, 2, 4), dtype=complex)
        up[0, 0] = [1, 0, 0, 0]
        up[0, 1] = [0, 1j, 0, 0]
        gains = model.effective_gains(model.ChannelSet(uplink=up, downlink=up))
        assert gains.uplink_gain[0, 1, 0] == 0.0
        assert gains.uplink_gain[0, 0, 1] == 0.0

    def test_matches_direct_inner_products(self):
        # independent recomputation from the definition, N=4
        rng = np.random.default_rng(5)
        up = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
        gains = model.effective_gains(model.ChannelSet(uplink=up, downlink=up))
        for m in range(2):
            for l in range(3):
                for k in range(3):
                    direct = abs(np.vdot(up[m, l], up[m, k])) ** 2 \
                        / np.linalg.norm(up[m, k]) ** 2
                    assert gains.uplink_gain[m, l, k] == pytest.approx(direct, abs=1e-12,
                                                                       rel=1e-12)
                    dl = abs(np.vdot(up[m, k], up[m, l])) ** 2 \
                        / np.linalg.norm(up[m, l]) ** 2
                    assert gains.downlink_gain[m, l, k] == pytest.approx(dl, abs=1e-12,
                                                                         rel=1e-12)

    def test_cauchy_schwarz_bound(self, tiny_scenario):
        topo, cfg, gains = tiny_scenario
        ch = model.generate_channels(topo, cfg)
        norms = np.einsum("mkn,mkn->mk", ch.uplink.conj(), ch.uplink).real
        for m in range(topo.num_bs):
            for l in range(topo.num_plants):
                assert np.all(gains.uplink_gain[m, l, :] <= norms[m, l] * (1 + 1e-12))

    def test_zero_norm_vector_errors(self):
        up = np.zeros((1, 2, 4), dtype=complex)
        up[0, 1] = [1, 0, 0, 0]
        with pytest.raises(ValueError, match=r"\(bs=0, plant=0\)"):
            model.effective_gains(model.ChannelSet(uplink=up, downlink=up))


class TestRecords:
    def test_time_allocation_budget_identity(self):
        with pytest.raises(ValueError):
            model.TimeAllocation(up_slots=np.array([1e-3]), compute_slot=1e-3,
                                 down_slots=np.array([1e-3]), period=4e-3)
        ok = model.TimeAllocation(up_slots=np.array([1e-3]), compute_slot=2e-3,
                                  down_slots=np.array([1e-3]), period=4e-3)
        assert ok.period == 4e-3

    def test_fdma_budget_rule(self):
        ok = model.TimeAllocation(up_slots=np.array([1e-3, 2e-3]), compute_slot=3e-3,
                                  down_slots=np.array([1e-3, 1e-3]), period=6e-3,
                                  protocol="fdma")
        assert ok.period == 6e-3

    def test_antenna_warning(self):
        with pytest.warns(UserWarning, match="num_antennas"):
            model.Topology(1, 4, 2, np.zeros((1, 2)), np.ones((4, 2)))

    def test_channel_export(self, tiny_scenario, tmp_path):
        topo, cfg, _ = tiny_scenario
        ch = model.generate_channels(topo, cfg)
        out = tmp_path / "channels.csv"
        model.export_channels_csv(ch, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "bs,plant,antenna,up_re,up_im,down_re,down_im"
        assert len(lines) == 1 + topo.num_bs * topo.num_plants * topo.num_antennas


def _cfg_for(topo):
    K, M = topo.num_plants, topo.num_bs
    return model.NetworkConfig(
        bandwidth_hz=10e6, noise_psd_dbm_per_hz=-110.0, pathloss_ref_db=-30.0,
        pathloss_ref_dist_m=1.0, pathloss_exp=3.0,
        uplink_power_cap_w=np.full(K, 0.5), downlink_power_budget_w=np.full(M, 5.0),
        bits_uplink=np.full(K, 500.0), bits_compute=np.full(K, 500.0),
        bits_downlink=np.full(K, 500.0), cycles_per_bit=np.full(K, 1000.0),
        cpu_freq_hz=np.full(M, 1e9), outage_threshold=1e-3, rng_seed=1)
