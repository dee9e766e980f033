"""Exact feasibility validation of a co-design solution.

Every emitted solution must satisfy the original (non-surrogate) constraints:
per-link outages at the rounded association, the stability matrix inequality
at the achieved period, the per-BS compute windows, the period budget
identity, the association structure, and the power caps.  Violations are
reported per constraint with the binding quantity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import comms
from .codesign import CoDesignSolution
from .control import stability_margin
from .state import Scenario, compute_loads, compute_windows, fdma_bandwidth

__all__ = ["FeasibilityReport", "validate_solution"]

TOL = 1e-6


@dataclass
class FeasibilityReport:
    entries: list  # (constraint name, violation, detail)

    @property
    def ok(self) -> bool:
        return not self.entries

    def summary(self) -> str:
        if self.ok:
            return "feasible"
        return "; ".join(f"{name}: {viol:.3g} ({detail})"
                         for name, viol, detail in self.entries)


def validate_solution(solution: CoDesignSolution, scn: Scenario,
                      tol: float = TOL) -> FeasibilityReport:
    """Check the exact constraint set at the solution; empty report means feasible."""
    cfg = scn.config
    topo = scn.topology
    M, K = topo.num_bs, topo.num_plants
    bad = []
    alpha = solution.assoc
    t = solution.time

    # association structure
    if not np.all((np.abs(alpha) < tol) | (np.abs(alpha - 1.0) < tol)):
        bad.append(("assoc_binary", float(np.abs(alpha - np.round(alpha)).max()),
                    "entries must be 0/1"))
    colsum = alpha.sum(axis=0)
    if np.any(np.abs(colsum - 1.0) > tol):
        k = int(np.argmax(np.abs(colsum - 1.0)))
        bad.append(("assoc_columns", float(np.abs(colsum - 1.0).max()), f"plant {k}"))

    # budget identity
    if solution.protocol == "tdma":
        total = float(t.up_slots.sum() + t.compute_slot + t.down_slots.sum())
    else:
        total = float(t.up_slots.max() + t.compute_slot + t.down_slots.max())
    if abs(total - solution.period) > 1e-9 * max(solution.period, 1e-12):
        bad.append(("time_budget", abs(total - solution.period), "slot sum vs period"))

    # power caps
    up_exc = alpha * solution.power.up - cfg.uplink_power_cap_w[None, :]
    if np.any(up_exc > tol * np.maximum(1.0, cfg.uplink_power_cap_w)):
        m, k = np.unravel_index(np.argmax(up_exc), up_exc.shape)
        bad.append(("uplink_power_cap", float(up_exc.max()), f"bs {m}, plant {k}"))
    dn_exc = (alpha * solution.power.down).sum(axis=1) - cfg.downlink_power_budget_w
    if np.any(dn_exc > tol * np.maximum(1.0, cfg.downlink_power_budget_w)):
        m = int(np.argmax(dn_exc))
        bad.append(("downlink_power_budget", float(dn_exc.max()), f"bs {m}"))

    # reliability at the rounded association
    bw = (np.full(M, cfg.bandwidth_hz) if solution.protocol == "tdma"
          else fdma_bandwidth(alpha, cfg.bandwidth_hz))
    sinr_up = comms.uplink_sinr(solution.power.up, scn.gains, scn.noise_w, alpha)
    sinr_dn = comms.downlink_sinr(solution.power.down, scn.gains, scn.noise_w, alpha)
    who = np.argmax(alpha, axis=0)
    for k in range(K):
        m = int(who[k])
        e_up = comms.outage(sinr_up[m, k], t.up_slots[m], bw[m], cfg.bits_uplink[k])
        e_dn = comms.outage(sinr_dn[m, k], t.down_slots[m], bw[m], cfg.bits_downlink[k])
        if e_up > cfg.outage_threshold + tol:
            bad.append(("uplink_outage", float(e_up - cfg.outage_threshold),
                        f"plant {k} at bs {m}"))
        if e_dn > cfg.outage_threshold + tol:
            bad.append(("downlink_outage", float(e_dn - cfg.outage_threshold),
                        f"plant {k} at bs {m}"))

    # stability at the achieved period
    margin = stability_margin(scn.form, scn.plant.Q, scn.plant.decay_rate,
                              solution.period)
    if margin < -tol:
        bad.append(("stability", float(-margin), f"period {solution.period:.6g}s"))

    # compute windows
    loads = compute_loads(alpha, cfg)
    if solution.protocol == "tdma":
        windows = compute_windows(t.up_slots, t.compute_slot, t.down_slots)
    else:
        windows = np.full(M, t.compute_slot)
    slack = cfg.cpu_freq_hz * windows - loads
    rel = slack / np.maximum(1.0, loads)
    if np.any(rel < -tol):
        m = int(np.argmin(rel))
        bad.append(("compute_window", float(-slack[m]), f"bs {m}"))

    return FeasibilityReport(bad)
