"""Alternating optimization pipeline: initialization, inner SCA loops,
association rounding with compute repair, and final refinement.

The relaxed problem is solved by alternating the time/association block and
the power/time block; the association is then rounded to one BS per plant and
the power/time block runs once more at the rounded association.  Every
accepted iterate satisfies the exact constraints of the relaxed model it was
produced under (auxiliaries are reset to defining values after each solve).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import comms, convex
from .control import PlantModel, default_plant, feasible_T_interval, stability_margin
from .model import (ASSOC_EPS, GainTensors, NetworkConfig, PowerAllocation,
                    TimeAllocation, Topology)
from .state import (EMPTY_SLOT, SLOT_FLOOR, T_CAP, Scenario, SolverState,
                    compute_loads, compute_windows, fdma_bandwidth,
                    make_scenario, reset_auxiliaries)
from .subproblems import apply_solution, build_pt_subproblem, build_ta_subproblem

__all__ = [
    "InitializationError",
    "CoDesignSolution",
    "initialize",
    "sca_loop",
    "alternating_optimize",
    "round_association",
    "solution_from_state",
    "export_trace_csv",
]

INNER_TOL = 1e-4
OUTER_TOL = 1e-4
MAX_INNER = 50
MAX_OUTER = 10
SCA_GAP_TOL = 1e-8


class InitializationError(RuntimeError):
    """No feasible starting point for the first convex surrogate."""


@dataclass
class CoDesignSolution:
    """Final co-design outcome at a binary association."""

    protocol: str
    assoc: np.ndarray            # (M, K) binary
    power: PowerAllocation
    time: TimeAllocation
    period: float
    outage_up: np.ndarray        # (K,)
    outage_dn: np.ndarray        # (K,)
    stability_margin: float
    status: str                  # optimal | infeasible | max_iter
    objective_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def assoc_counts(self) -> np.ndarray:
        return self.assoc.sum(axis=1).astype(int)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "status": self.status,
            "period_s": self.period,
            "assoc": self.assoc.astype(int).tolist(),
            "power_up_w": self.power.up.tolist(),
            "power_down_w": self.power.down.tolist(),
            "t_up_s": self.time.up_slots.tolist(),
            "t_compute_s": self.time.compute_slot,
            "t_down_s": self.time.down_slots.tolist(),
            "outage_up": self.outage_up.tolist(),
            "outage_dn": self.outage_dn.tolist(),
            "stability_margin": self.stability_margin,
            "objective_history": list(self.objective_history),
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _nearest_assoc(topology: Topology) -> np.ndarray:
    """One-hot association by minimum distance; ties go to the lower BS index."""
    dist = topology.distances()
    nearest = np.argmin(dist, axis=0)
    alpha = np.zeros((topology.num_bs, topology.num_plants))
    alpha[nearest, np.arange(topology.num_plants)] = 1.0
    return alpha


def _balanced_nearest(scn: Scenario) -> np.ndarray:
    """Nearest-BS association rebalanced toward equal compute loads.

    Moves the cheapest plants (best alternative channel first) off overloaded
    BSs so the initial soft association does not pin the compute slot to the
    heaviest cell; the relaxed optimization remains free to move them back.
    """
    cfg = scn.config
    alpha = _nearest_assoc(scn.topology)
    M, K = alpha.shape
    if M == 1:
        return alpha
    per_plant = cfg.cycles_per_bit * cfg.bits_compute
    direct = scn.gains.channel_norms_sq()
    target = per_plant.sum() / M + per_plant.max() * 0.5
    for _ in range(K):
        loads = (alpha * per_plant[None, :]).sum(axis=1)
        src = int(np.argmax(loads))
        if loads[src] <= target:
            break
        dest = int(np.argmin(loads))
        mine = np.where(alpha[src] > 0.5)[0]
        if mine.size <= 1:
            break
        k = int(max(mine, key=lambda kk: direct[dest, kk] / max(direct[src, kk], 1e-300)))
        alpha[src, k], alpha[dest, k] = 0.0, 1.0
    return alpha


def _soften(alpha: np.ndarray, mass: float = 0.9) -> np.ndarray:
    """Spread 1 - mass of each one-hot column over the other BSs."""
    M = alpha.shape[0]
    if M == 1 or mass is None:
        return alpha.copy()
    soft = np.full_like(alpha, (1.0 - mass) / (M - 1))
    soft[alpha > 0.5] = mass
    return soft


def _slot_for_margin(sinr: float, bits: float, bw: float, needed: float) -> float | None:
    """Smallest slot with rate margin >= needed, by bisection; None if not below T_CAP."""
    f = lambda t: comms.rate_margin(sinr, t, bw, bits)
    if f(T_CAP) < needed:
        return None
    lo, hi = SLOT_FLOOR, T_CAP
    if f(lo) >= needed:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) >= needed:
            hi = mid
        else:
            lo = mid
    return hi


def _restore_feasibility(state: SolverState, scn: Scenario,
                         margin_factor: float = 2.0) -> None:
    """Inflate slots and clamp powers so the state strictly satisfies the
    exact relaxed constraints with the requested reliability margin.

    Raises InitializationError naming the binding link when no slot below the
    period cap can satisfy a reliability constraint, or when the resulting
    period leaves the stability window.
    """
    cfg = scn.config
    M, K = state.assoc.shape
    target = scn.qinv_target

    # power caps (active pairs only; inactive powers are zeroed)
    act = state.active_pairs()
    state.power_up = np.where(act, state.power_up, 0.0)
    state.power_down = np.where(act, state.power_down, 0.0)
    with np.errstate(divide="ignore"):
        cap = np.where(act, cfg.uplink_power_cap_w[None, :] / np.maximum(state.assoc, 1e-12),
                       0.0)
    state.power_up = np.minimum(state.power_up, cap * (1.0 - 1e-6))
    row = (state.assoc * state.power_down).sum(axis=1)
    budget = cfg.downlink_power_budget_w
    over = row > budget * (1.0 - 1e-9)
    scale = np.where(over, budget * (1.0 - 1e-6) / np.maximum(row, 1e-300), 1.0)
    state.power_down = state.power_down * scale[:, None]

    bw = state.bandwidths(cfg)
    sinr_up = comms.uplink_sinr(state.power_up, scn.gains, scn.noise_w, state.assoc)
    sinr_dn = comms.downlink_sinr(state.power_down, scn.gains, scn.noise_w, state.assoc)

    # seed slots so every anchor link has the requested margin, then repair the
    # association-weighted constraints by growing whichever slot helps most
    anchors = np.argmax(state.assoc, axis=0)
    for tag, sinr, bits, slots in (("up", sinr_up, cfg.bits_uplink, state.t_up),
                                   ("dn", sinr_dn, cfg.bits_downlink, state.t_dn)):
        for m in range(M):
            mine = np.where(anchors == m)[0]
            needed = []
            for k in mine:
                t = _slot_for_margin(sinr[m, k], float(bits[k]), float(bw[m]),
                                     margin_factor * target)
                if t is None:
                    raise InitializationError(
                        f"{tag}link of plant {k} at BS {m} cannot reach the "
                        f"reliability margin below the period cap")
                needed.append(t)
            seed = max(needed) if needed else EMPTY_SLOT
            slots[m] = max(slots[m], seed)
        for _ in range(200):
            margins = comms.rate_margin(sinr, slots[:, None], bw[:, None], bits[None, :])
            weighted = (state.assoc * margins).sum(axis=0)
            bad = np.where(weighted < 1.05 * target)[0]
            if bad.size == 0:
                break
            k = int(bad[np.argmin(weighted[bad])])
            # marginal weighted-margin gain per unit of slot time
            du = np.sqrt(slots * bw)
            gain = state.assoc[:, k] * (np.log2(1.0 + sinr[:, k]) + bits[k] / (slots * bw)) \
                * bw / (2.0 * du)
            slots[int(np.argmax(gain))] *= 1.3
            if slots.max() > T_CAP:
                raise InitializationError(
                    f"{tag}link of plant {k} cannot reach the weighted "
                    f"reliability margin below the period cap")
        else:
            raise InitializationError(f"{tag}link margins did not stabilize")

    # compute slot and period
    loads = compute_loads(state.assoc, cfg)
    if state.protocol == "fdma":
        state.t_cmp_bs = loads / cfg.cpu_freq_hz * 1.001 + 1e-9
        state.t_cmp = float(state.t_cmp_bs.max())
        state.period = float(state.t_up.max() + state.t_cmp + state.t_dn.max())
    else:
        need = float(np.max(loads / cfg.cpu_freq_hz))
        state.t_cmp = max(state.t_cmp, need * 1.001 + 1e-9, SLOT_FLOOR * 10)
        state.period = float(state.t_up.sum() + state.t_cmp + state.t_dn.sum())
        windows = compute_windows(state.t_up, state.t_cmp, state.t_dn)
        deficit = np.max(loads / cfg.cpu_freq_hz - windows)
        if deficit > 0:
            state.t_cmp += deficit * 1.001
            state.period = float(state.t_up.sum() + state.t_cmp + state.t_dn.sum())

    window = feasible_T_interval(scn.form, scn.plant.Q, scn.plant.decay_rate, T_CAP)
    if window is None:
        raise InitializationError("no stable sample period exists below the cap")
    t_lo, t_hi = window
    if state.period < t_lo:
        pad = t_lo * (1.0 + 1e-7) - state.period
        state.t_cmp += pad
        state.period += pad
    if state.period > t_hi * (1.0 - 1e-9):
        raise InitializationError(
            f"minimum achievable period {state.period:.6g}s exceeds the stability "
            f"window upper edge {t_hi:.6g}s")
    reset_auxiliaries(state, scn)


def _controlled_uplink(scn: Scenario, assoc: np.ndarray,
                       snr_target: float = 10.0) -> np.ndarray:
    """Open-loop uplink power control toward a common received-SNR target.

    Cuts the interference that full-cap transmission inflicts on cell-edge
    plants; each power is capped at the plant's limit.
    """
    cfg = scn.config
    direct = scn.gains.channel_norms_sq()  # (M, K)
    want = snr_target * scn.noise_w / np.maximum(direct, 1e-300)
    anchors = np.argmax(assoc, axis=0)
    per_plant = np.minimum(want[anchors, np.arange(assoc.shape[1])],
                           cfg.uplink_power_cap_w)
    return np.tile(per_plant, (assoc.shape[0], 1))


def _controlled_downlink(scn: Scenario, assoc: np.ndarray) -> np.ndarray:
    """Fractional inverse-gain downlink split per BS.

    Shares scale with 1/sqrt(gain) (partial compensation of weak plants),
    floored at a third of the equal share so strong plants are not starved.
    """
    cfg = scn.config
    M, K = assoc.shape
    direct = scn.gains.channel_norms_sq()
    anchors = np.argmax(assoc, axis=0)
    powers = np.zeros((M, K))
    for m in range(M):
        mine = np.where(anchors == m)[0]
        if mine.size == 0:
            powers[m, :] = cfg.downlink_power_budget_w[m] / K
            continue
        weight = 1.0 / np.sqrt(np.maximum(direct[m, mine], 1e-300))
        share = weight / weight.sum()
        share = np.maximum(share, 0.33 / mine.size)
        share /= share.sum()
        powers[m, :] = cfg.downlink_power_budget_w[m] / (2.0 * K)
        powers[m, mine] = cfg.downlink_power_budget_w[m] * share
    # keep the association-weighted row totals inside the budget
    row = (assoc * powers).sum(axis=1)
    scale = cfg.downlink_power_budget_w * (1.0 - 1e-6) / np.maximum(row, 1e-300)
    return powers * np.minimum(scale, 1.0)[:, None]


def _init_state(scn: Scenario, protocol: str = "tdma",
                assoc: np.ndarray | None = None, soften: bool = True,
                power_modes: tuple = ("caps", "controlled")) -> SolverState:
    topo, cfg = scn.topology, scn.config
    M, K = topo.num_bs, topo.num_plants
    free_assoc = assoc is None and soften and K > 1 and M > 1
    if free_assoc:
        masses = (0.9, 0.98)  # back off the off-anchor mass when its weak
        # links drag the weighted reliability margins past the period window
    else:
        masses = (None,)
        if assoc is None:
            assoc = _nearest_assoc(topo)

    def fresh(power_mode, mass):
        a = _soften(_balanced_nearest(scn), mass) if mass is not None else assoc
        counts = np.maximum((a > 0.5).sum(axis=1), 1)
        if power_mode == "caps":
            power_up = np.tile(cfg.uplink_power_cap_w, (M, 1))
            power_down = np.tile((cfg.downlink_power_budget_w / counts)[:, None],
                                 (1, K)) * (1.0 - 1e-6)
        else:
            power_up = _controlled_uplink(scn, a)
            power_down = _controlled_downlink(scn, a)
        return SolverState(
            protocol=protocol, assoc=a.astype(float),
            power_up=power_up, power_down=power_down,
            t_up=np.full(M, SLOT_FLOOR * 10), t_dn=np.full(M, SLOT_FLOOR * 10),
            t_cmp=SLOT_FLOOR * 10, period=0.0, period_sq=0.0,
            margin_up=np.zeros((M, K)), margin_dn=np.zeros((M, K)),
            se_up=np.zeros((M, K)), se_dn=np.zeros((M, K)),
            sqrt_t_up=np.zeros(M), sqrt_t_dn=np.zeros(M),
        )

    # prefer cap powers with a doubled reliability margin; back off on the
    # margin, then on the softening, then fall back to power-controlled links
    last_exc = None
    for power_mode in power_modes:
        for mass in masses:
            for factor in (2.0, 1.5, 1.2, 1.05, 1.005):
                state = fresh(power_mode, mass)
                try:
                    _restore_feasibility(state, scn, margin_factor=factor)
                except InitializationError as exc:
                    last_exc = exc
                    continue
                state.objective_history = [state.period]
                return state
    raise last_exc


def initialize(topology: Topology, config: NetworkConfig, gains: GainTensors,
               plant: PlantModel | None = None, protocol: str = "tdma",
               assoc: np.ndarray | None = None) -> SolverState:
    """Feasible starting state: softened nearest-BS association, cap/equal-split
    powers, slots sized for a doubled reliability margin, auxiliaries at their
    defining values."""
    scn = make_scenario(topology, config, gains, plant or default_plant())
    return _init_state(scn, protocol=protocol, assoc=assoc)


# ---------------------------------------------------------------------------
# SCA loop and alternation
# ---------------------------------------------------------------------------

def sca_loop(builder, state: SolverState, scn: Scenario, tol: float = INNER_TOL,
             max_iter: int = MAX_INNER, gap_tol: float = SCA_GAP_TOL,
             label: str = "") -> SolverState:
    """Iterate one block's convex surrogate to a fixed point.

    ``builder(state)`` must return (program, index).  Accepts an iterate only
    if it does not increase the objective, so the recorded history is
    non-increasing; stops when the relative improvement falls below ``tol``.
    Raises InitializationError when the very first surrogate is unsolvable.
    """
    state.surrogate_point = None  # expand at defining values on loop entry
    prev_x = None
    last_improved = None
    for it in range(1, max_iter + 1):
        prog, index = builder(state)
        warm = prev_x if prev_x is not None else prog.x0
        if prev_x is None:
            mu0 = 100.0
        else:
            # start near the previous central-path position: barrier width
            # m/mu0 should cover the expected move of the optimum
            move = max(10.0 * (last_improved or 1e-4), 1e-8)
            mu0 = min(3e8, max(1e4, prog.barrier_weight() / move))
        sol = convex.solve(prog, warm_start=warm, gap_tol=gap_tol, mu0=mu0)
        if sol.status != "optimal":
            if it == 1:
                worst = convex.check_solution(prog, prog.x0).worst()
                raise InitializationError(
                    f"{label or 'block'} surrogate not solvable at the starting "
                    f"point (status {sol.status}, worst atom {worst[0]})")
            state.status = sol.status
            break
        candidate = apply_solution(state, scn, index, sol.x)
        if candidate.period > state.period + 1e-12 * max(1.0, state.period):
            break  # converged to surrogate tolerance; keep the better iterate
        prev_x = sol.x
        violation = convex.check_solution(prog, sol.x).max_violation
        improved = state.period - candidate.period
        last_improved = improved
        candidate.objective_history = state.objective_history + [candidate.period]
        candidate.trace = state.trace + [
            {"outer": state.outer_iters, "inner": it, "block": label,
             "period": candidate.period, "max_violation": violation}]
        candidate.inner_iters = it
        candidate.status = "ok"
        state = candidate
        if improved <= tol * max(state.period, 1e-12):
            break
    else:
        state.status = "max_iter"
    return state


def round_association(state: SolverState, scn: Scenario) -> np.ndarray:
    """Per-column argmax rounding with greedy compute repair.

    While a BS's computational load exceeds its current compute window, its
    cheapest plant (smallest compute bits) moves to that plant's next-best BS
    by relaxed association weight.  Each plant moves at most once; when no
    further move helps, the current rounding is returned and the subsequent
    refinement restores feasibility by growing the compute slot.
    """
    cfg = scn.config
    M, K = state.assoc.shape
    rounded = np.zeros((M, K))
    rounded[np.argmax(state.assoc, axis=0), np.arange(K)] = 1.0
    if M == 1:
        return rounded
    if state.protocol == "fdma":
        windows = np.full(M, state.t_cmp)
    else:
        windows = compute_windows(state.t_up, state.t_cmp, state.t_dn)
    capacity = cfg.cpu_freq_hz * windows
    per_plant = cfg.cycles_per_bit * cfg.bits_compute
    moved: set[int] = set()
    for _ in range(M * K):
        loads = compute_loads(rounded, cfg)
        over = np.where(loads > capacity * (1.0 + 1e-9))[0]
        if over.size == 0:
            break
        m = int(over[np.argmax(loads[over] - capacity[over])])
        mine = [k for k in np.where(rounded[m] > 0.5)[0] if k not in moved]
        if len(mine) <= 1:
            break
        # smallest compute load first; ties prefer the plant whose runner-up
        # association weight is largest (least perturbation of the relaxation)
        runner_up = lambda kk: max(state.assoc[mm, kk] for mm in range(M) if mm != m)
        k = int(min(mine, key=lambda kk: (per_plant[kk], -runner_up(kk))))
        order = np.argsort(-state.assoc[:, k])
        dest = next((int(mm) for mm in order if mm != m), None)
        if dest is None:
            break
        rounded[m, k], rounded[dest, k] = 0.0, 1.0
        moved.add(k)
    return rounded


def _reinit_powers(state: SolverState, scn: Scenario) -> None:
    """Repair powers after the association was rounded.

    Relaxed powers are kept on links that stay anchored with a healthy level;
    links the rounding re-anchored (whose relaxed power may have been drained)
    restart from the cap / equal split.  Downlink rows are rescaled into the
    budget.
    """
    cfg = scn.config
    act = state.assoc > 0.5
    counts = np.maximum(act.sum(axis=1), 1)
    ctrl = _controlled_uplink(scn, state.assoc)
    state.power_up = np.where(act & (state.power_up >= 0.05 * ctrl), state.power_up,
                              ctrl * (1.0 - 1e-6))
    state.power_up = np.where(act, np.minimum(state.power_up,
                                              cfg.uplink_power_cap_w[None, :]), 0.0)
    share = (cfg.downlink_power_budget_w / counts)[:, None]
    state.power_down = np.where(act & (state.power_down >= 0.02 * share),
                                state.power_down, share * (1.0 - 1e-6))
    state.power_down = np.where(act, state.power_down, 0.0)
    row = state.power_down.sum(axis=1)
    over = row > cfg.downlink_power_budget_w * (1.0 - 1e-9)
    scale = np.where(over, cfg.downlink_power_budget_w * (1.0 - 1e-6)
                     / np.maximum(row, 1e-300), 1.0)
    state.power_down *= scale[:, None]
    state.surrogate_point = None


def solution_from_state(state: SolverState, scn: Scenario,
                        status: str = "optimal") -> CoDesignSolution:
    """Exact-model solution record at a binary association."""
    cfg = scn.config
    assoc = (state.assoc > 0.5).astype(float)
    bw = state.bandwidths(cfg)
    sinr_up = comms.uplink_sinr(state.power_up, scn.gains, scn.noise_w, assoc)
    sinr_dn = comms.downlink_sinr(state.power_down, scn.gains, scn.noise_w, assoc)
    K = scn.topology.num_plants
    who = np.argmax(assoc, axis=0)
    eps_up = np.array([comms.outage(sinr_up[who[k], k], state.t_up[who[k]],
                                    bw[who[k]], cfg.bits_uplink[k]) for k in range(K)])
    eps_dn = np.array([comms.outage(sinr_dn[who[k], k], state.t_dn[who[k]],
                                    bw[who[k]], cfg.bits_downlink[k]) for k in range(K)])
    margin = stability_margin(scn.form, scn.plant.Q, scn.plant.decay_rate,
                              state.period)
    time = TimeAllocation(up_slots=state.t_up.copy(), compute_slot=state.t_cmp,
                          down_slots=state.t_dn.copy(), period=state.period,
                          protocol=state.protocol)
    power = PowerAllocation(up=np.where(assoc > 0.5, state.power_up, 0.0),
                            down=np.where(assoc > 0.5, state.power_down, 0.0))
    return CoDesignSolution(
        protocol=state.protocol, assoc=assoc, power=power, time=time,
        period=state.period, outage_up=eps_up, outage_dn=eps_dn,
        stability_margin=margin, status=status,
        objective_history=list(state.objective_history), trace=list(state.trace))


def alternating_optimize(topology: Topology, config: NetworkConfig,
                         gains: GainTensors, plant: PlantModel | None = None,
                         protocol: str = "tdma",
                         inner_tol: float = INNER_TOL, outer_tol: float = OUTER_TOL,
                         max_inner: int = MAX_INNER, max_outer: int = MAX_OUTER,
                         relaxed_max_inner: int = 30,
                         gap_tol: float = SCA_GAP_TOL) -> CoDesignSolution:
    """Full co-design: alternate the two blocks, round, refine.

    The relaxed alternation runs its inner loops on a reduced iteration budget
    (``relaxed_max_inner``); the final refinement at the rounded association
    uses the full ``max_inner``.  With a single BS (or a single plant) the
    association is fixed to nearest and only the power/time block runs.
    """
    plant = plant or default_plant()
    scn = make_scenario(topology, config, gains, plant)
    M, K = topology.num_bs, topology.num_plants
    trivial_assoc = (M == 1 or K == 1)
    state = _init_state(scn, protocol=protocol, soften=not trivial_assoc)

    ta = lambda s: build_ta_subproblem(s, scn)
    pt = lambda s: build_pt_subproblem(s, scn)
    inner_budget = min(relaxed_max_inner, max_inner)

    if not trivial_assoc:
        for outer in range(1, max_outer + 1):
            before = state.period
            state.outer_iters = outer
            state = sca_loop(ta, state, scn, inner_tol, inner_budget, gap_tol, "ta")
            state = sca_loop(pt, state, scn, inner_tol, inner_budget, gap_tol, "pt")
            if before - state.period <= outer_tol * max(state.period, 1e-12):
                break
        # candidates: the rounded relaxation carrying its powers forward, plus
        # the nearest-BS and compute-balanced integer points restarted cleanly
        candidates = [(round_association(state, scn), False)]
        for extra in (_nearest_assoc(topology), _balanced_nearest(scn)):
            if not any(np.array_equal(extra, a) for a, _ in candidates):
                candidates.append((extra, True))
    else:
        candidates = [(_nearest_assoc(topology), True)]

    # refine at each rounding candidate; keep the best feasible outcome
    best = None
    failure = None
    for assoc, fresh in candidates:
        try:
            cand = _candidate_state(state, scn, assoc, fresh, protocol)
        except InitializationError as exc:
            failure = str(exc)
            continue
        cand.outer_iters = state.outer_iters + 1
        cand = sca_loop(pt, cand, scn, inner_tol, max_inner, gap_tol, "pt_final")
        if best is None or cand.period < best.period:
            best = cand
    if best is None:
        return _infeasible_solution(state, scn, failure or "no feasible rounding")
    return solution_from_state(best, scn,
                               status="optimal" if best.status in ("ok", "optimal")
                               else best.status)


def _candidate_state(state: SolverState, scn: Scenario, assoc: np.ndarray,
                     fresh: bool, protocol: str) -> SolverState:
    """Refinement start at a binary association.

    ``fresh`` rebuilds the state exactly as a cold start at that association
    (matching the fixed-association pipeline); otherwise the relaxed powers are
    carried over where healthy and slots are re-inflated.
    """
    if fresh:
        cand = _init_state(scn, protocol=protocol, assoc=assoc)
        cand.objective_history = state.objective_history + [cand.period]
        cand.trace = list(state.trace)
        return cand
    cand = state.copy()
    cand.assoc = assoc
    _reinit_powers(cand, scn)
    try:
        _restore_feasibility(cand, scn, margin_factor=1.2)
    except InitializationError:
        # retry from fully power-controlled uplinks and an equal split
        cand = state.copy()
        cand.assoc = assoc
        cand.power_up = np.zeros_like(cand.power_up)
        _reinit_powers(cand, scn)
        _restore_feasibility(cand, scn, margin_factor=1.05)
    return cand


def _infeasible_solution(state: SolverState, scn: Scenario, reason: str) -> CoDesignSolution:
    sol = solution_from_state(state, scn, status="infeasible")
    sol.trace.append({"outer": state.outer_iters, "inner": 0, "block": "error",
                      "period": state.period, "max_violation": float("nan"),
                      "reason": reason})
    return sol


def export_trace_csv(solution: CoDesignSolution, path) -> None:
    """Iteration trace: outer index, inner index, block id, period, max violation."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("outer,inner,block,period_s,max_violation\n")
        for row in solution.trace:
            fh.write(f"{row['outer']},{row['inner']},{row['block']},"
                     f"{row['period']:.12g},{row.get('max_violation', float('nan')):.6g}\n")
