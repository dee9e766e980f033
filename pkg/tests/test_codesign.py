import numpy as np
import pytest

from wncc import comms, convex
from wncc.codesign import (InitializationError, _init_state, alternating_optimize,
                           initialize, round_association, sca_loop,
                           solution_from_state, export_trace_csv)
from wncc.state import make_scenario, compute_loads, compute_windows
from wncc.subproblems import build_pt_subproblem, build_ta_subproblem
from wncc.validate import validate_solution

from conftest import make_default_scenario


class TestInitialize:
    def test_auxiliaries_at_defining_values(self, tiny_scenario, default_plant):
        topo, cfg, gains = tiny_scenario
        state = initialize(topo, cfg, gains, default_plant)
        scn = make_scenario(topo, cfg, gains, default_plant)
        bw = state.bandwidths(cfg)
        sinr = comms.uplink_sinr(state.power_up, gains, scn.noise_w, state.assoc)
        margins = comms.rate_margin(sinr, state.t_up[:, None], bw[:, None],
                                    cfg.bits_uplink[None, :])
        assert np.allclose(state.margin_up, margins, rtol=1e-12)
        assert np.allclose(state.sqrt_t_up, np.sqrt(state.t_up), rtol=1e-12)
        assert state.period_sq == pytest.approx(state.period ** 2, rel=1e-12)

    def test_first_surrogates_accept_initial_point(self, default_plant):
        topo, cfg, gains = make_default_scenario(3, num_plants=6, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        for builder in (build_ta_subproblem, build_pt_subproblem):
            prog, _ = builder(state, scn)
            assert convex.check_solution(prog, prog.x0).ok(1e-7)

    def test_single_plant_one_hot(self, default_plant):
        topo, cfg, gains = make_default_scenario(4, num_plants=1, num_antennas=8)
        state = initialize(topo, cfg, gains, default_plant)
        col = state.assoc[:, 0]
        assert set(col.tolist()) <= {0.0, 1.0}
        assert col.sum() == 1.0

    def test_soft_nearest_columns_sum_to_one(self, default_plant):
        topo, cfg, gains = make_default_scenario(5, num_plants=6, num_antennas=16)
        state = initialize(topo, cfg, gains, default_plant)
        assert np.allclose(state.assoc.sum(axis=0), 1.0)
        assert np.allclose(np.sort(np.unique(state.assoc)), [0.1, 0.9])

    def test_period_respects_stability_window(self, default_plant):
        from wncc.control import feasible_T_interval
        topo, cfg, gains = make_default_scenario(6, num_plants=6, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        lo, hi = feasible_T_interval(scn.form, scn.plant.Q, scn.plant.decay_rate)
        assert lo <= state.period <= hi


class TestScaLoop:
    def test_objective_history_non_increasing(self, default_plant):
        topo, cfg, gains = make_default_scenario(7, num_plants=6, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        state = sca_loop(lambda s: build_pt_subproblem(s, scn), state, scn,
                         tol=1e-4, max_iter=30, label="pt")
        hist = state.objective_history
        assert len(hist) >= 2
        assert all(b - a <= 1e-9 for a, b in zip(hist, hist[1:]))

    def test_converged_fixed_point(self, default_plant):
        topo, cfg, gains = make_default_scenario(7, num_plants=4, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        builder = lambda s: build_pt_subproblem(s, scn)
        state = sca_loop(builder, state, scn, tol=1e-5, max_iter=120, label="pt")
        before = state.period
        # one more surrogate solve at the fixed point barely moves the objective
        again = sca_loop(builder, state.copy(), scn, tol=0.0, max_iter=1, label="pt")
        assert abs(again.period - before) <= 1e-4 * before

    def test_max_iter_status(self, default_plant):
        topo, cfg, gains = make_default_scenario(8, num_plants=6, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        state = sca_loop(lambda s: build_pt_subproblem(s, scn), state, scn,
                         tol=0.0, max_iter=2, label="pt")
        assert state.status == "max_iter"
        assert len(state.objective_history) >= 2


class TestRounding:
    def test_argmax_columns(self, default_plant):
        topo, cfg, gains = make_default_scenario(9, num_plants=6, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        rounded = round_association(state, scn)
        assert rounded.shape == state.assoc.shape
        assert np.allclose(rounded.sum(axis=0), 1.0)
        assert set(np.unique(rounded)) <= {0.0, 1.0}

    def test_repair_relieves_overloaded_bs(self, default_plant):
        topo, cfg, gains = make_default_scenario(10, num_plants=8, num_antennas=16)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        # force every plant toward BS 0 and give tiny compute windows
        state.assoc = np.vstack([np.full(8, 0.9), np.full(8, 0.1)])
        state.t_cmp = 2.4e-3  # room for 4 plants x 5e5 cycles at 1 GHz per window
        state.t_up[:] = 1e-4
        state.t_dn[:] = 1e-4
        rounded = round_association(state, scn)
        loads = compute_loads(rounded, cfg)
        windows = compute_windows(state.t_up, state.t_cmp, state.t_dn)
        assert np.all(loads <= cfg.cpu_freq_hz * windows * (1 + 1e-9))


class TestAlternating:
    def test_tiny_instance_end_to_end(self, tiny_scenario, default_plant):
        topo, cfg, gains = tiny_scenario
        sol = alternating_optimize(topo, cfg, gains, default_plant)
        scn = make_scenario(topo, cfg, gains, default_plant)
        assert sol.status == "optimal"
        assert validate_solution(sol, scn).ok
        assert sol.period > 0

    def test_single_plant_equals_pt_only(self, default_plant):
        topo, cfg, gains = make_default_scenario(11, num_plants=1, num_antennas=8)
        sol = alternating_optimize(topo, cfg, gains, default_plant)
        assert sol.status == "optimal"
        assert sol.assoc.sum() == 1.0
        # only power/time blocks appear in the trace
        assert {row["block"] for row in sol.trace} <= {"pt_final"}

    def test_trace_export(self, tiny_scenario, default_plant, tmp_path):
        topo, cfg, gains = tiny_scenario
        sol = alternating_optimize(topo, cfg, gains, default_plant)
        path = tmp_path / "trace.csv"
        export_trace_csv(sol, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "outer,inner,block,period_s,max_violation"
        assert len(lines) == 1 + len(sol.trace)

    def test_solution_json_roundtrip(self, tiny_scenario, default_plant, tmp_path):
        topo, cfg, gains = tiny_scenario
        sol = alternating_optimize(topo, cfg, gains, default_plant)
        path = tmp_path / "solution.json"
        sol.save_json(path)
        import json
        payload = json.loads(path.read_text())
        assert payload["period_s"] == pytest.approx(sol.period)
        assert payload["status"] == "optimal"

    def test_infeasible_reported_with_binding_link(self, default_plant):
        # payloads far beyond what any slot below the stability ceiling carries
        topo, cfg, gains = make_default_scenario(12, num_plants=4, num_antennas=16)
        import dataclasses
        cfg = dataclasses.replace(cfg, bits_uplink=np.full(4, 5e9))
        with pytest.raises(InitializationError, match="plant"):
            initialize(topo, cfg, gains, default_plant)
