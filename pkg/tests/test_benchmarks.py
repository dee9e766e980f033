import numpy as np
import pytest

from wncc import model
from wncc.benchmarks import (association_only, fdma_design, proposed,
                             resource_only, run_scheme)
from wncc.codesign import _nearest_assoc
from wncc.state import make_scenario
from wncc.validate import validate_solution

from conftest import make_default_scenario


class TestAssociationOnly:
    def test_equal_power_invariant_at_output(self, default_plant):
        topo, cfg, gains = make_default_scenario(3, num_plants=6, num_antennas=16)
        res = association_only(topo, cfg, gains, default_plant)
        sol = res.solution
        assert sol.status == "optimal"
        # uplink at caps, downlink an equal split of the budget per BS
        act = sol.assoc > 0.5
        assert np.allclose(sol.power.up[act],
                           np.tile(cfg.uplink_power_cap_w, (2, 1))[act])
        for m in range(topo.num_bs):
            mine = sol.power.down[m][act[m]]
            if mine.size:
                assert np.allclose(mine, mine[0])
                assert mine.sum() <= cfg.downlink_power_budget_w[m] * (1 + 1e-9)

    def test_single_plant_gets_full_budget(self, default_plant):
        topo, cfg, gains = make_default_scenario(4, num_plants=1, num_antennas=8)
        res = association_only(topo, cfg, gains, default_plant)
        act = res.solution.assoc > 0.5
        assert res.solution.power.down[act][0] == pytest.approx(
            cfg.downlink_power_budget_w[0], rel=1e-5)


class TestResourceOnly:
    def test_nearest_association(self, default_plant):
        topo, cfg, gains = make_default_scenario(5, num_plants=6, num_antennas=16)
        res = resource_only(topo, cfg, gains, default_plant)
        assert np.array_equal(res.solution.assoc, _nearest_assoc(topo))

    def test_equidistant_tie_goes_to_lower_index(self):
        topo = model.Topology(2, 1, 8, np.array([[0.0, 0.0], [10.0, 0.0]]),
                              np.array([[5.0, 0.0]]))
        assoc = _nearest_assoc(topo)
        assert assoc[0, 0] == 1.0
        assert assoc[1, 0] == 0.0


class TestFdma:
    def test_single_bs_compute_window(self, default_plant):
        # one BS: the dedicated compute slot must cover sum(S*bits)/F
        topo, cfg, gains = make_default_scenario(6, num_plants=4, num_antennas=16,
                                                 num_bs=1)
        res = fdma_design(topo, cfg, gains, default_plant)
        sol = res.solution
        assert sol.status == "optimal"
        need = float((cfg.cycles_per_bit * cfg.bits_compute).sum()
                     / cfg.cpu_freq_hz[0])
        assert sol.time.compute_slot >= need * (1 - 1e-9)

    def test_sixteen_plants_single_bs_needs_8ms(self, default_plant):
        # 16 plants x 1000 cycles/bit x 500 bits at 1 GHz = 8 ms
        topo, cfg, gains = make_default_scenario(7, num_plants=16,
                                                 num_antennas=32, num_bs=1)
        res = fdma_design(topo, cfg, gains, default_plant)
        assert res.solution.time.compute_slot >= 8e-3 * (1 - 1e-9)
        assert res.solution.period >= 8e-3

    def test_fdma_budget_rule(self, default_plant):
        topo, cfg, gains = make_default_scenario(8, num_plants=6, num_antennas=16)
        res = fdma_design(topo, cfg, gains, default_plant)
        t = res.solution.time
        assert t.protocol == "fdma"
        total = t.up_slots.max() + t.compute_slot + t.down_slots.max()
        assert total == pytest.approx(res.solution.period, rel=1e-9)


class TestPairedComparison:
    def test_proposed_not_worse_than_resource_only(self, default_plant):
        # the nearest-association candidate makes this ordering structural;
        # the full four-scheme statistics live in the acceptance suite
        topo, cfg, gains = make_default_scenario(5, num_plants=8, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        periods = {}
        for name in ("proposed", "resource_only"):
            res = run_scheme(name, topo, cfg, gains, default_plant)
            assert res.solution.status in ("optimal", "max_iter")
            assert validate_solution(res.solution, scn).ok
            periods[name] = res.period
        assert periods["proposed"] <= periods["resource_only"] + 1e-6

    def test_unknown_scheme(self, tiny_scenario, default_plant):
        topo, cfg, gains = tiny_scenario
        with pytest.raises(ValueError, match="unknown scheme"):
            run_scheme("magic", topo, cfg, gains, default_plant)
