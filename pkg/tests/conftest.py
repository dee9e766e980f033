import numpy as np
import pytest

from wncc import control, model


def make_default_scenario(seed, num_plants=16, cpu_freq=1e9, downlink_power=5.0,
                          num_bs=2, num_antennas=32, pathloss_exp=2.5):
    """Two-cell reference scenario with seed-dependent plant placement."""
    rng = np.random.default_rng(seed)
    if num_bs == 2:
        bs = np.array([[30.0, 30.0], [70.0, 70.0]])
    elif num_bs == 1:
        bs = np.array([[50.0, 50.0]])
    else:
        bs = np.column_stack([np.linspace(20, 80, num_bs), np.linspace(20, 80, num_bs)])
    topo = model.Topology(num_bs, num_plants, num_antennas, bs,
                          rng.uniform(0, 100, (num_plants, 2)))
    cfg = model.NetworkConfig(
        bandwidth_hz=10e6, noise_psd_dbm_per_hz=-110.0, pathloss_ref_db=-30.0,
        pathloss_ref_dist_m=1.0, pathloss_exp=pathloss_exp,
        uplink_power_cap_w=np.full(num_plants, 0.5),
        downlink_power_budget_w=np.full(num_bs, downlink_power),
        bits_uplink=np.full(num_plants, 500.0),
        bits_compute=np.full(num_plants, 500.0),
        bits_downlink=np.full(num_plants, 500.0),
        cycles_per_bit=np.full(num_plants, 1000.0),
        cpu_freq_hz=np.full(num_bs, cpu_freq),
        outage_threshold=1e-3, rng_seed=seed)
    channels = model.generate_channels(topo, cfg, seed)
    gains = model.effective_gains(channels)
    return topo, cfg, gains


@pytest.fixture
def tiny_scenario():
    """Single BS, two plants at fixed positions."""
    topo = model.Topology(1, 2, 8, np.array([[50.0, 50.0]]),
                          np.array([[40.0, 40.0], [70.0, 60.0]]))
    cfg = model.NetworkConfig(
        bandwidth_hz=10e6, noise_psd_dbm_per_hz=-110.0, pathloss_ref_db=-30.0,
        pathloss_ref_dist_m=1.0, pathloss_exp=3.0,
        uplink_power_cap_w=np.full(2, 0.5), downlink_power_budget_w=np.array([5.0]),
        bits_uplink=np.full(2, 500.0), bits_compute=np.full(2, 500.0),
        bits_downlink=np.full(2, 500.0), cycles_per_bit=np.full(2, 1000.0),
        cpu_freq_hz=np.array([1e9]), outage_threshold=1e-3, rng_seed=3)
    channels = model.generate_channels(topo, cfg)
    gains = model.effective_gains(channels)
    return topo, cfg, gains


@pytest.fixture
def default_plant():
    return control.default_plant()


def write_scenario(path, **overrides):
    """Write a scenario file with the reference values plus overrides."""
    base = {
        "num_bs": 2, "num_plants": 16, "num_antennas": 32,
        "bs_positions_m": "30,30; 70,70",
        "plant_positions_mode": "uniform", "area_min_m": 0, "area_max_m": 100,
        "bandwidth_hz": "10e6", "noise_psd_dbm_per_hz": -110,
        "pathloss_ref_db": -30, "pathloss_ref_dist_m": 1, "pathloss_exp": 2.5,
        "uplink_power_cap_w": 0.5, "downlink_power_budget_w": 5.0,
        "bits_uplink": 500, "bits_compute": 500, "bits_downlink": 500,
        "cycles_per_bit": 1000, "cpu_freq_hz": "1e9",
        "outage_threshold": "1e-3", "rng_seed": 1,
        "plant_dim": 2, "plant_a": "1,1; 0,1", "plant_b": "1,0; 0,1",
        "plant_q": "1,0; 0,1", "plant_r": "1,0; 0,1",
        "decay_rate": 0.8, "feedback_pole": 100.0,
    }
    base.update(overrides)
    lines = [f"{k} = {v}" for k, v in base.items() if v is not None]
    path.write_text("\n".join(lines) + "\n")
    return path
