"""Comparison schemes sharing the co-design model and solver.

All schemes emit a CoDesignSolution validated against the same exact
constraint set, so performance differences are purely algorithmic:

* ``proposed``          - full alternating co-design (association + powers + time)
* ``association_only``  - association and time only, equal power split
* ``resource_only``     - powers and time only, nearest-BS association
* ``fdma``              - three-slot equal-bandwidth protocol, full co-design
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codesign import (InitializationError, CoDesignSolution, _balanced_nearest,
                       _infeasible_solution, _init_state, _nearest_assoc,
                       _reinit_powers, _restore_feasibility, alternating_optimize,
                       round_association, sca_loop, solution_from_state,
                       INNER_TOL, MAX_INNER, MAX_OUTER, OUTER_TOL, SCA_GAP_TOL)
from .control import PlantModel, default_plant
from .model import GainTensors, NetworkConfig, Topology
from .state import Scenario, make_scenario, reset_auxiliaries
from .subproblems import build_pt_subproblem, build_ta_subproblem

__all__ = ["SchemeResult", "association_only", "resource_only", "fdma_design",
           "proposed", "SCHEMES", "run_scheme"]


@dataclass
class SchemeResult:
    scheme: str
    solution: CoDesignSolution
    assoc_counts: np.ndarray
    period: float

    @classmethod
    def wrap(cls, scheme: str, solution: CoDesignSolution) -> "SchemeResult":
        return cls(scheme=scheme, solution=solution,
                   assoc_counts=solution.assoc_counts, period=solution.period)


def _equalize_downlink(state, scn: Scenario) -> None:
    """Uniform downlink power P_m / (association row mass); uplink at caps."""
    cfg = scn.config
    M, K = state.assoc.shape
    mass = np.maximum(state.assoc.sum(axis=1), 1e-9)
    state.power_up = np.tile(cfg.uplink_power_cap_w, (M, 1))
    state.power_down = np.tile((cfg.downlink_power_budget_w / mass)[:, None],
                               (1, K)) * (1.0 - 1e-6)
    state.surrogate_point = None
    reset_auxiliaries(state, scn)


def association_only(topology: Topology, config: NetworkConfig, gains: GainTensors,
                     plant: PlantModel | None = None, protocol: str = "tdma",
                     inner_tol: float = INNER_TOL, outer_tol: float = OUTER_TOL,
                     max_inner: int = MAX_INNER, max_outer: int = MAX_OUTER,
                     gap_tol: float = SCA_GAP_TOL) -> SchemeResult:
    """Optimize association and time at an equal transmit power split.

    The downlink power is re-equalized after every association update; the
    final pass re-optimizes the time allocation at the rounded association.
    """
    plant = plant or default_plant()
    scn = make_scenario(topology, config, gains, plant)
    state = _init_state(scn, protocol=protocol, power_modes=("caps",))
    _equalize_downlink(state, scn)
    ta = lambda s: build_ta_subproblem(s, scn)
    ta_fixed = lambda s: build_ta_subproblem(s, scn, fix_alpha=True)

    def finalize(st, assoc=None):
        """Round, re-equalize, and re-optimize the time allocation only."""
        st = st.copy()
        if assoc is not None:
            st.assoc = assoc
        elif topology.num_bs > 1 and topology.num_plants > 1:
            st.assoc = round_association(st, scn)
        else:
            st.assoc = _nearest_assoc(topology)
        _equalize_downlink(st, scn)
        _restore_feasibility(st, scn, margin_factor=1.05)
        st.outer_iters += 1
        return sca_loop(ta_fixed, st, scn, inner_tol, max_inner, gap_tol, "t_final")

    # the equal-power re-split after each association update can worsen or even
    # break feasibility; keep the best finalized snapshot seen so far, with the
    # nearest-BS and compute-balanced associations always among the candidates
    best = None
    for start in (None, _nearest_assoc(topology), _balanced_nearest(scn)):
        try:
            cand = finalize(state, assoc=start)
        except InitializationError:
            continue
        if best is None or cand.period < best.period:
            best = cand
    if topology.num_bs > 1 and topology.num_plants > 1:
        for outer in range(1, max_outer + 1):
            before = state.period
            state.outer_iters = outer
            try:
                state = sca_loop(ta, state, scn, inner_tol, max_inner, gap_tol, "ta")
                cand = finalize(state)
                if best is None or cand.period < best.period:
                    best = cand
                _equalize_downlink(state, scn)
                _restore_feasibility(state, scn, margin_factor=1.02)
            except InitializationError:
                break
            if before - state.period <= outer_tol * max(state.period, 1e-12):
                break
    if best is None:
        return SchemeResult.wrap("association_only",
                                 _infeasible_solution(state, scn,
                                                      "no feasible equal-power rounding"))
    status = "optimal" if best.status in ("ok", "optimal") else best.status
    return SchemeResult.wrap("association_only", solution_from_state(best, scn, status))


def resource_only(topology: Topology, config: NetworkConfig, gains: GainTensors,
                  plant: PlantModel | None = None, protocol: str = "tdma",
                  inner_tol: float = INNER_TOL, max_inner: int = MAX_INNER,
                  gap_tol: float = SCA_GAP_TOL) -> SchemeResult:
    """Optimize powers and time at the fixed nearest-BS association."""
    plant = plant or default_plant()
    scn = make_scenario(topology, config, gains, plant)
    assoc = _nearest_assoc(topology)
    state = _init_state(scn, protocol=protocol, assoc=assoc)
    pt = lambda s: build_pt_subproblem(s, scn)
    state.outer_iters = 1
    try:
        state = sca_loop(pt, state, scn, inner_tol, max_inner, gap_tol, "pt")
    except InitializationError as exc:
        return SchemeResult.wrap("resource_only",
                                 _infeasible_solution(state, scn, str(exc)))
    status = "optimal" if state.status in ("ok", "optimal") else state.status
    return SchemeResult.wrap("resource_only", solution_from_state(state, scn, status))


def fdma_design(topology: Topology, config: NetworkConfig, gains: GainTensors,
                plant: PlantModel | None = None, **kwargs) -> SchemeResult:
    """Full co-design under the three-slot equal-bandwidth protocol.

    Each BS's plants split the band evenly, the compute slot is dedicated
    (no overlap with other BSs' transmissions), and the period is
    max(uplink) + compute + max(downlink).
    """
    solution = alternating_optimize(topology, config, gains, plant,
                                    protocol="fdma", **kwargs)
    return SchemeResult.wrap("fdma", solution)


def proposed(topology: Topology, config: NetworkConfig, gains: GainTensors,
             plant: PlantModel | None = None, **kwargs) -> SchemeResult:
    """The full alternating co-design under the staggered-slot protocol."""
    solution = alternating_optimize(topology, config, gains, plant, **kwargs)
    return SchemeResult.wrap("proposed", solution)


SCHEMES = {
    "proposed": proposed,
    "association_only": association_only,
    "resource_only": resource_only,
    "fdma": fdma_design,
}


def run_scheme(name: str, topology, config, gains, plant=None, **kwargs) -> SchemeResult:
    try:
        fn = SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}")
    return fn(topology, config, gains, plant, **kwargs)
