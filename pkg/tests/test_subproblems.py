import math

import numpy as np
import pytest

from wncc import comms, convex, model
from wncc.codesign import _init_state
from wncc.state import make_scenario
from wncc.subproblems import apply_solution, build_pt_subproblem, build_ta_subproblem

from conftest import make_default_scenario


@pytest.fixture
def tiny_state(tiny_scenario, default_plant):
    topo, cfg, gains = tiny_scenario
    scn = make_scenario(topo, cfg, gains, default_plant)
    return scn, _init_state(scn)


@pytest.fixture
def two_cell_state(default_plant):
    topo, cfg, gains = make_default_scenario(5, num_plants=6, num_antennas=16)
    scn = make_scenario(topo, cfg, gains, default_plant)
    return scn, _init_state(scn)


def bilinear_exact_lhs(alpha, margins, target):
    """Exact decoupled reliability constraint in <=0 form for one plant."""
    quad = sum((a + g) ** 2 - (a - g) ** 2 for a, g in zip(alpha, margins))
    return 4.0 * comms.LOG2E * target - quad


def test_difference_of_squares_identity():
    # the product decoupling used by both blocks is exact for all reals
    rng = np.random.default_rng(0)
    xs = rng.uniform(-50, 50, 500)
    ys = rng.uniform(-50, 50, 500)
    lhs = xs * ys
    rhs = ((xs + ys) ** 2 - (xs - ys) ** 2) / 4.0
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-9 * (1 + np.abs(lhs)).max())


class TestAssociationBlock:
    def test_surrogate_tight_at_expansion_point(self, two_cell_state):
        scn, state = two_cell_state
        prog, index = build_ta_subproblem(state, scn)
        rep = convex.check_solution(prog, prog.x0)
        # the compiled reliability atoms at the expansion point equal the
        # exact bilinear forms there
        qinv = comms.q_inv(scn.config.outage_threshold)
        for k in range(scn.topology.num_plants):
            name = f"reliability_up[{k}]"
            got = next(v for n, _, v in rep.entries if n == name)
            margins = [index["margin_up"][m][k].value(prog.x0)
                       for m in range(scn.topology.num_bs)]
            exact = bilinear_exact_lhs(state.assoc[:, k], margins, qinv)
            assert got == pytest.approx(exact, rel=1e-9, abs=1e-9)

    def test_surrogate_upper_bounds_exact(self, two_cell_state):
        # sampled points: surrogate constraint value >= exact constraint value
        scn, state = two_cell_state
        prog, index = build_ta_subproblem(state, scn)
        rng = np.random.default_rng(2)
        qinv = comms.q_inv(scn.config.outage_threshold)
        M, K = state.assoc.shape
        for _ in range(50):
            x = prog.x0.copy()
            for m in range(M - 1):
                for k in range(K):
                    i = index["assoc"][m][k].arrays()[0][0]
                    x[i] = rng.uniform(0.0, 1.0)
            for m in range(M):
                for k in range(K):
                    i = index["margin_up"][m][k].arrays()[0][0]
                    x[i] = rng.uniform(-5.0, 30.0)
            rep = convex.check_solution(prog, x)
            for k in range(K):
                alphas = [index["assoc"][m][k].value(x) for m in range(M)]
                margins = [index["margin_up"][m][k].value(x) for m in range(M)]
                got = next(v for n, _, v in rep.entries
                           if n == f"reliability_up[{k}]")
                exact = bilinear_exact_lhs(alphas, margins, qinv)
                assert got >= exact - 1e-9

    def test_initial_point_feasible(self, two_cell_state):
        scn, state = two_cell_state
        prog, _ = build_ta_subproblem(state, scn)
        assert convex.check_solution(prog, prog.x0).ok(1e-7)

    def test_single_link_matches_bisection(self, default_plant):
        # M=1, K=1 at fixed power: the optimal uplink slot is the smallest one
        # meeting the reliability target, found independently by bisection
        topo = model.Topology(1, 1, 8, np.array([[0.0, 0.0]]),
                              np.array([[30.0, 30.0]]))
        cfg = model.NetworkConfig(
            bandwidth_hz=10e6, noise_psd_dbm_per_hz=-110.0, pathloss_ref_db=-30.0,
            pathloss_ref_dist_m=1.0, pathloss_exp=3.0,
            uplink_power_cap_w=np.array([0.5]),
            downlink_power_budget_w=np.array([5.0]),
            bits_uplink=np.array([500.0]), bits_compute=np.array([500.0]),
            bits_downlink=np.array([500.0]), cycles_per_bit=np.array([1000.0]),
            cpu_freq_hz=np.array([1e9]), outage_threshold=1e-3, rng_seed=2)
        gains = model.effective_gains(model.generate_channels(topo, cfg))
        # fast plant: the stability window is wide open, so the period is
        # communication/compute limited and every slot shrinks to its minimum
        from wncc.control import default_plant as plant_factory
        plant = plant_factory(feedback_pole=1000.0)
        scn = make_scenario(topo, cfg, gains, plant)
        state = _init_state(scn)
        from wncc.codesign import sca_loop
        builder = lambda s: build_ta_subproblem(s, scn, fix_alpha=True)
        state = sca_loop(builder, state, scn, tol=1e-9, max_iter=300,
                         gap_tol=1e-11, label="t")
        got_up = float(state.t_up[0])

        sinr = comms.uplink_sinr(state.power_up, scn.gains, scn.noise_w,
                                 state.assoc)[0, 0]
        target = comms.q_inv(cfg.outage_threshold) * comms.LOG2E
        lo, hi = 1e-9, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if comms.rate_margin(sinr, mid, cfg.bandwidth_hz, 500.0) >= target:
                hi = mid
            else:
                lo = mid
        assert got_up == pytest.approx(hi, rel=1e-4)


class TestPowerTimeBlock:
    def test_initial_point_feasible(self, two_cell_state):
        scn, state = two_cell_state
        prog, _ = build_pt_subproblem(state, scn)
        assert convex.check_solution(prog, prog.x0).ok(1e-7)

    def test_zero_interference_cap_reduces_to_direct_rate(self, default_plant):
        # orthogonal channels: the spectral-efficiency cap at the expansion
        # point equals log2(1 + p * gain / noise)
        up = np.zeros((1, 2, 4), dtype=complex)
        up[0, 0] = [2e-4, 0, 0, 0]
        up[0, 1] = [0, 1e-4, 0, 0]
        gains = model.effective_gains(model.ChannelSet(uplink=up, downlink=up))
        topo = model.Topology(1, 2, 4, np.array([[0.0, 0.0]]),
                              np.array([[10.0, 0.0], [0.0, 10.0]]))
        cfg = model.NetworkConfig(
            bandwidth_hz=10e6, noise_psd_dbm_per_hz=-110.0, pathloss_ref_db=-30.0,
            pathloss_ref_dist_m=1.0, pathloss_exp=3.0,
            uplink_power_cap_w=np.full(2, 0.5),
            downlink_power_budget_w=np.array([5.0]),
            bits_uplink=np.full(2, 500.0), bits_compute=np.full(2, 500.0),
            bits_downlink=np.full(2, 500.0), cycles_per_bit=np.full(2, 1000.0),
            cpu_freq_hz=np.array([1e9]), outage_threshold=1e-3, rng_seed=2)
        scn = make_scenario(topo, cfg, gains, default_plant)
        state = _init_state(scn)
        prog, index = build_pt_subproblem(state, scn)
        x = prog.x0.copy()
        for k in range(2):
            se_idx = index["se_up"][0, k].arrays()[0][0]
            direct = math.log2(1.0 + state.power_up[0, k]
                               * gains.uplink_gain[0, k, k] / scn.noise_w)
            # push the auxiliary to the cap: constraint value must be ~0
            x[se_idx] = direct
            rep = convex.check_solution(prog, x)
            got = next(v for n, _, v in rep.entries if n == f"se_cap_up[0,{k}]")
            assert got == pytest.approx(0.0, abs=1e-9)

    def test_sqrt_cap_binds_only_below_slot(self, two_cell_state):
        scn, state = two_cell_state
        prog, index = build_pt_subproblem(state, scn)
        x = prog.x0.copy()
        rep = convex.check_solution(prog, x)
        for m in range(scn.topology.num_bs):
            tau = index["tau_up"][m].value(x)
            slot = index["t_up"][m].value(x)
            assert tau * tau <= slot * (1 + 1e-9)

    def test_iterate_improves_and_stays_exact_feasible(self, two_cell_state):
        scn, state = two_cell_state
        prog, index = build_pt_subproblem(state, scn)
        sol = convex.solve(prog, warm_start=prog.x0, gap_tol=1e-8, mu0=1.0)
        assert sol.status == "optimal"
        nxt = apply_solution(state, scn, index, sol.x)
        assert nxt.period <= state.period + 1e-12
        # exact (non-surrogate) reliability at the new iterate
        cfg = scn.config
        bw = nxt.bandwidths(cfg)
        sinr = comms.uplink_sinr(nxt.power_up, scn.gains, scn.noise_w, nxt.assoc)
        margins = comms.rate_margin(sinr, nxt.t_up[:, None], bw[:, None],
                                    cfg.bits_uplink[None, :])
        weighted = (nxt.assoc * margins).sum(axis=0)
        target = comms.q_inv(cfg.outage_threshold) * comms.LOG2E
        assert np.all(weighted >= target - 1e-7)


class TestStabilityCoupling:
    def test_quad_negative_semidefinite_for_default(self, two_cell_state):
        scn, _ = two_cell_state
        assert not scn.positive_curvature()

    def test_lmi_holds_exactly_at_solution_period(self, two_cell_state):
        # c >= T^2 with nonpositive curvature implies the exact inequality
        from wncc.control import stability_margin
        scn, state = two_cell_state
        prog, index = build_pt_subproblem(state, scn)
        sol = convex.solve(prog, warm_start=prog.x0, gap_tol=1e-8, mu0=1.0)
        T = index["T"].value(sol.x)
        c = index["c"].value(sol.x)
        assert c >= T * T - 1e-12
        assert stability_margin(scn.form, scn.plant.Q, scn.plant.decay_rate,
                                T) >= -1e-9
