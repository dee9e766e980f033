"""Shared optimizer state for the alternating co-design pipeline.

A ``Scenario`` bundles the immutable problem data; a ``SolverState`` carries
the decision variables, the auxiliary variables of the block subproblems and
the expansion points for their convex surrogates.  After every accepted
iterate the auxiliaries are reset to their defining values, so a state always
satisfies the exact (non-surrogate) constraints it was accepted under.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import comms
from .control import PlantModel, StabilityForm, stability_matrices
from .model import ASSOC_EPS, GainTensors, NetworkConfig, Topology

__all__ = ["Scenario", "SolverState", "make_scenario", "reset_auxiliaries",
           "fdma_bandwidth", "compute_loads", "compute_windows"]

SLOT_FLOOR = 1e-7     # smallest optimizable slot duration (s)
EMPTY_SLOT = 1e-6     # fixed duration of slots of BSs with no associated plants
T_CAP = 1.0           # guard on the sample period search (s)


@dataclass(frozen=True)
class Scenario:
    """Immutable problem data shared by all schemes on one channel draw."""

    topology: Topology
    config: NetworkConfig
    gains: GainTensors
    plant: PlantModel
    form: StabilityForm

    @property
    def noise_w(self) -> float:
        return self.config.noise_power_w

    @property
    def qinv_target(self) -> float:
        """Required finite-blocklength rate margin: q_inv(eps_th) * log2(e)."""
        return comms.q_inv(self.config.outage_threshold) * comms.LOG2E

    def positive_curvature(self) -> bool:
        return bool(np.linalg.eigvalsh(self.form.quad_coeff)[-1] > 1e-12)


def make_scenario(topology: Topology, config: NetworkConfig, gains: GainTensors,
                  plant: PlantModel) -> Scenario:
    form = stability_matrices(plant, config.outage_threshold)
    return Scenario(topology=topology, config=config, gains=gains, plant=plant,
                    form=form)


@dataclass
class SolverState:
    """Decision and auxiliary variables of the relaxed co-design problem."""

    protocol: str                 # "tdma" | "fdma"
    assoc: np.ndarray             # (M, K) in [0, 1]
    power_up: np.ndarray          # (M, K) W
    power_down: np.ndarray        # (M, K) W
    t_up: np.ndarray              # (M,) s
    t_dn: np.ndarray              # (M,) s
    t_cmp: float                  # s (dedicated compute slot; max over BSs for fdma)
    period: float                 # s
    period_sq: float              # s^2
    margin_up: np.ndarray         # (M, K) finite-blocklength rate margins
    margin_dn: np.ndarray
    se_up: np.ndarray             # (M, K) log2(1 + sinr)
    se_dn: np.ndarray
    sqrt_t_up: np.ndarray         # (M,)
    sqrt_t_dn: np.ndarray
    t_cmp_bs: np.ndarray | None = None   # (M,) per-BS compute slots (fdma only)
    # raw auxiliary values at the last solver point; used as SCA expansion
    # points (falling back to the defining values when absent/stale)
    surrogate_point: dict | None = None
    objective_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    inner_iters: int = 0
    outer_iters: int = 0
    status: str = "ok"

    def copy(self) -> "SolverState":
        out = replace(self)
        for name in ("assoc", "power_up", "power_down", "t_up", "t_dn",
                     "margin_up", "margin_dn", "se_up", "se_dn",
                     "sqrt_t_up", "sqrt_t_dn"):
            setattr(out, name, getattr(self, name).copy())
        if self.t_cmp_bs is not None:
            out.t_cmp_bs = self.t_cmp_bs.copy()
        if self.surrogate_point is not None:
            out.surrogate_point = dict(self.surrogate_point)
        out.objective_history = list(self.objective_history)
        out.trace = list(self.trace)
        return out

    def active_pairs(self) -> np.ndarray:
        return self.assoc > ASSOC_EPS

    def bandwidths(self, config: NetworkConfig) -> np.ndarray:
        """Per-BS finite-blocklength bandwidth: full band for tdma, an equal
        per-plant share for fdma."""
        if self.protocol == "tdma":
            return np.full(self.assoc.shape[0], config.bandwidth_hz)
        return fdma_bandwidth(self.assoc, config.bandwidth_hz)


def fdma_bandwidth(assoc: np.ndarray, bandwidth_hz: float) -> np.ndarray:
    """Equal per-plant bandwidth share per BS, using the ceiling of the
    (possibly fractional) association row mass as the plant count."""
    counts = np.maximum(1.0, np.ceil(np.asarray(assoc).sum(axis=1) - 1e-9))
    return bandwidth_hz / counts


def compute_loads(assoc: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Per-BS computational load sum_k assoc * cycles_per_bit * bits_compute."""
    per_plant = config.cycles_per_bit * config.bits_compute
    return (np.asarray(assoc) * per_plant[None, :]).sum(axis=1)


def compute_windows(t_up: np.ndarray, t_cmp: float, t_dn: np.ndarray) -> np.ndarray:
    """Per-BS compute window under the staggered slot schedule.

    BS m may compute during the uplink slots of later BSs, the dedicated slot,
    and the downlink slots of earlier BSs.
    """
    M = len(t_up)
    up_tail = np.concatenate([np.cumsum(t_up[::-1])[::-1][1:], [0.0]])  # sum_{i>m}
    dn_head = np.concatenate([[0.0], np.cumsum(t_dn)[:-1]])             # sum_{i<m}
    return up_tail + t_cmp + dn_head


def reset_auxiliaries(state: SolverState, scn: Scenario) -> None:
    """Recompute every auxiliary from its defining expression in place.

    Margins become the achieved finite-blocklength rate surpluses, the
    spectral efficiencies become log2(1 + sinr) at the current powers (with
    the current interference mask), sqrt-time equals sqrt(slot), and the
    period-squared auxiliary equals period**2.
    """
    cfg = scn.config
    mask = state.assoc
    g_up = comms.uplink_sinr(state.power_up, scn.gains, scn.noise_w, mask)
    g_dn = comms.downlink_sinr(state.power_down, scn.gains, scn.noise_w, mask)
    bw = state.bandwidths(cfg)
    state.se_up = np.log2(1.0 + g_up)
    state.se_dn = np.log2(1.0 + g_dn)
    state.margin_up = comms.rate_margin(g_up, state.t_up[:, None], bw[:, None],
                                        cfg.bits_uplink[None, :])
    state.margin_dn = comms.rate_margin(g_dn, state.t_dn[:, None], bw[:, None],
                                        cfg.bits_downlink[None, :])
    state.sqrt_t_up = np.sqrt(state.t_up)
    state.sqrt_t_dn = np.sqrt(state.t_dn)
    state.period_sq = state.period ** 2


def clear_surrogate_point(state: SolverState) -> None:
    """Forget the last solver point; the next surrogate expands at the
    defining-value auxiliaries.  Call after any out-of-solver state edit."""
    state.surrogate_point = None
