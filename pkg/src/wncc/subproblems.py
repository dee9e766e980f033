"""Compilation of the two alternating block subproblems into convex programs.

``build_ta_subproblem`` optimizes time allocation and (relaxed) association at
fixed powers; ``build_pt_subproblem`` optimizes powers and time allocation at
fixed association.  Non-convex pieces are replaced by tangent surrogates at
the state's expansion point, so each compiled program is an inner
approximation of the exact feasible set that is tight at that point.

Both builders return (program, index) where ``index`` maps every model
quantity to an affine expression over the program variables;
``apply_solution`` decodes a solver result back into a SolverState.
"""
from __future__ import annotations

import math

import numpy as np

from . import comms
from .convex import Affine, ConvexProgram, ProgramBuilder
from .state import (EMPTY_SLOT, SLOT_FLOOR, T_CAP, Scenario, SolverState,
                    compute_loads, reset_auxiliaries)

__all__ = ["build_ta_subproblem", "build_pt_subproblem", "apply_solution"]

MARGIN_BOX = 1e6


# ---------------------------------------------------------------------------
# smooth-atom factories
# ---------------------------------------------------------------------------

def _margin_family(rate_coefs, bits, bws, norm):
    """Family: margin - (sqrt(t*bw)*rate_coef - bits/sqrt(t*bw)) <= 0 over (t, margin)."""
    C = np.asarray(rate_coefs, dtype=float)
    lam = np.asarray(bits, dtype=float)
    bw = np.asarray(bws, dtype=float)

    def f(X, derivs):
        t = X[:, 0]
        margin = X[:, 1]
        u = np.sqrt(t * bw)
        vals = (margin - C * u + lam / u) / norm
        if not derivs:
            return vals
        r = len(vals)
        grads = np.empty((r, 2))
        grads[:, 0] = (-C - lam / (u * u)) * (bw / (2.0 * u)) / norm
        grads[:, 1] = 1.0 / norm
        hess = np.zeros((r, 2, 2))
        hess[:, 0, 0] = bw * bw * (C + 3.0 * lam / (u * u)) / (4.0 * u ** 3) / norm
        return vals, grads, hess
    return f


def _reliability_family(weights, bits, sqrt_bw, d0, tau0, target, norm):
    """Family: surrogate round-trip reliability, one member per plant.

    Members span [tau_1..tau_w, d_1..d_w] (padded columns carry zero weight):

        target + sum_j w_j * ( bits/(sqrt_bw_j * tau_j)
                               + sqrt_bw_j/4 * ((d_j - tau_j)^2 - lin_j) ) <= 0

    with lin_j the tangent of (d_j + tau_j)^2 at the expansion point.
    """
    W = np.asarray(weights, dtype=float)       # (r, w)
    lam = np.asarray(bits, dtype=float)        # (r,)
    SB = np.asarray(sqrt_bw, dtype=float)      # (r, w)
    S0 = np.asarray(d0, dtype=float) + np.asarray(tau0, dtype=float)
    D0 = np.asarray(d0, dtype=float)
    T0 = np.asarray(tau0, dtype=float)
    active = W > 0
    SB = np.where(active, SB, 1.0)
    w = W.shape[1]

    def f(X, derivs):
        tau = np.where(active, X[:, :w], 1.0)  # padded entries never divide
        d = X[:, w:]
        lin = S0 ** 2 + 2.0 * S0 * (d - D0) + 2.0 * S0 * (tau - T0)
        diff = d - tau
        vals = (target + (W * (lam[:, None] / (SB * tau)
                               + 0.25 * SB * (diff * diff - lin))).sum(axis=1)) / norm
        if not derivs:
            return vals
        r = len(vals)
        grads = np.zeros((r, 2 * w))
        grads[:, :w] = W * (-lam[:, None] / (SB * tau ** 2)
                            + 0.25 * SB * (-2.0 * diff - 2.0 * S0)) / norm
        grads[:, w:] = W * 0.25 * SB * (2.0 * diff - 2.0 * S0) / norm
        hess = np.zeros((r, 2 * w, 2 * w))
        jj = np.arange(w)
        hess[:, jj, jj] = W * (2.0 * lam[:, None] / (SB * tau ** 3) + 0.5 * SB) / norm
        hess[:, w + jj, w + jj] = W * 0.5 * SB / norm
        hess[:, jj, w + jj] = -W * 0.5 * SB / norm
        hess[:, w + jj, jj] = -W * 0.5 * SB / norm
        return vals, grads, hess
    return f


def _spectral_eff_family(gains, gcoefs, const0, noise):
    """Family: d <= log2(noise + sum_i p_i g_i) - tangent of the interference log.

    Members span [d, p_1..p_w]; padded power columns carry zero gain.
    """
    G = np.asarray(gains, dtype=float)      # (r, w)
    GC = np.asarray(gcoefs, dtype=float)    # (r, w)
    C0 = np.asarray(const0, dtype=float)    # (r,)

    def f(X, derivs):
        d = X[:, 0]
        p = X[:, 1:]
        total = noise + (G * p).sum(axis=1)
        vals = d - np.log2(total) + C0 + (GC * p).sum(axis=1)
        if not derivs:
            return vals
        r = len(vals)
        w = G.shape[1]
        grads = np.empty((r, w + 1))
        grads[:, 0] = 1.0
        grads[:, 1:] = -comms.LOG2E * G / total[:, None] + GC
        hess = np.zeros((r, w + 1, w + 1))
        hess[:, 1:, 1:] = (comms.LOG2E / total ** 2)[:, None, None] \
            * G[:, :, None] * G[:, None, :]
        return vals, grads, hess
    return f


# ---------------------------------------------------------------------------
# shared time/stability scaffolding
# ---------------------------------------------------------------------------

def _time_block(b: ProgramBuilder, state: SolverState, scn: Scenario,
                loads: list, active_bs: np.ndarray) -> dict:
    """Add time variables, compute constraints and the stability atoms.

    ``loads`` holds one affine expression per BS for the computational load;
    ``active_bs[m]`` False pins BS m's communication slots to the empty-slot
    floor.  Returns expressions for slots, the period, its square and the
    dedicated compute slot.
    """
    M = scn.topology.num_bs
    cfg = scn.config
    t_scale = max(1e-4, float(np.median(state.t_up)))

    def slot_vars(prefix, current):
        exprs = []
        for m in range(M):
            if active_bs[m]:
                exprs.append(b.add_var(f"{prefix}[{m}]", SLOT_FLOOR, T_CAP,
                                       scale=t_scale, init=float(current[m])))
            else:
                exprs.append(Affine.of(EMPTY_SLOT))
        return exprs

    t_up = slot_vars("t_up", state.t_up)
    t_dn = slot_vars("t_dn", state.t_dn)

    if state.protocol == "tdma":
        T = b.add_var("T", SLOT_FLOOR * (2 * M + 1), T_CAP, scale=max(1e-3, state.period),
                      init=state.period)
        t_cmp = T - sum(t_up, Affine.of(0.0)) - sum(t_dn, Affine.of(0.0))
        b.affine_le(SLOT_FLOOR - t_cmp, "t_cmp_floor")
        for m in range(M):
            window = sum(t_up[m + 1:], Affine.of(0.0)) + t_cmp + sum(t_dn[:m], Affine.of(0.0))
            b.affine_le(loads[m] - float(cfg.cpu_freq_hz[m]) * window, f"compute[{m}]")
        index_extra = {}
    else:  # fdma: three global slots, dedicated per-BS compute
        cur_cmp = state.t_cmp_bs if state.t_cmp_bs is not None \
            else compute_loads(state.assoc, cfg) / cfg.cpu_freq_hz
        t_cmp_bs = [b.add_var(f"t_cmp_bs[{m}]", SLOT_FLOOR, T_CAP, scale=t_scale,
                              init=float(cur_cmp[m]) * (1 + 1e-9) + 1e-9)
                    for m in range(M)]
        up_max = b.add_var("up_max", SLOT_FLOOR, T_CAP, scale=t_scale,
                           init=float(state.t_up.max()) * (1 + 1e-6) + 1e-9)
        dn_max = b.add_var("dn_max", SLOT_FLOOR, T_CAP, scale=t_scale,
                           init=float(state.t_dn.max()) * (1 + 1e-6) + 1e-9)
        cmp_max = b.add_var("cmp_max", SLOT_FLOOR, T_CAP, scale=t_scale,
                            init=float(np.max(cur_cmp)) * (1 + 2e-6) + 2e-9)
        for m in range(M):
            b.affine_le(t_up[m] - up_max, f"up_max[{m}]")
            b.affine_le(t_dn[m] - dn_max, f"dn_max[{m}]")
            b.affine_le(t_cmp_bs[m] - cmp_max, f"cmp_max[{m}]")
            b.affine_le(loads[m] - float(cfg.cpu_freq_hz[m]) * t_cmp_bs[m],
                        f"compute[{m}]")
        T = up_max + cmp_max + dn_max
        t_cmp = cmp_max
        index_extra = {"t_cmp_bs": t_cmp_bs}

    c = b.add_var("c", 0.0, T_CAP ** 2, scale=max(1e-6, state.period_sq),
                  init=state.period_sq * (1 + 1e-7) + 1e-12)
    b.quad_le([(1.0, T)], Affine() - c, "period_sq")
    if scn.positive_curvature():
        # tangent cap keeping c <= T^2 for positive-curvature stability forms
        T0 = state.period
        b.affine_le(c - 2.0 * T0 * T + T0 * T0, "period_sq_cap")
    eta = scn.plant.decay_rate
    b.lmi_ge((eta - 1.0) * scn.plant.Q,
             [(c, scn.form.quad_coeff), (T, scn.form.lin_coeff)], "stability")
    b.minimize(T)
    return {"t_up": t_up, "t_dn": t_dn, "T": T, "c": c, "t_cmp": t_cmp,
            **index_extra}


def _load_exprs(assoc_exprs, scn: Scenario):
    per_plant = scn.config.cycles_per_bit * scn.config.bits_compute
    loads = []
    for row in assoc_exprs:
        expr = Affine.of(0.0)
        for k, a in enumerate(row):
            expr = expr + a * float(per_plant[k])
        loads.append(expr)
    return loads


# ---------------------------------------------------------------------------
# block builders
# ---------------------------------------------------------------------------

def build_ta_subproblem(state: SolverState, scn: Scenario,
                        fix_alpha: bool = False) -> tuple[ConvexProgram, dict]:
    """Time-and-association block at fixed transmit powers.

    Association columns are kept on the unit simplex by eliminating the last
    BS row; the bilinear association/margin products are decoupled through the
    difference-of-squares identity with the growing square linearized at the
    expansion point.
    """
    M, K = scn.topology.num_bs, scn.topology.num_plants
    cfg = scn.config
    b = ProgramBuilder()

    mask = state.assoc
    sinr_up = comms.uplink_sinr(state.power_up, scn.gains, scn.noise_w, mask)
    sinr_dn = comms.downlink_sinr(state.power_down, scn.gains, scn.noise_w, mask)
    bw = state.bandwidths(cfg)

    # association expressions (row M-1 eliminated onto the simplex)
    if fix_alpha or M == 1:
        assoc_exprs = [[Affine.of(float(state.assoc[m, k])) for k in range(K)]
                       for m in range(M)]
    else:
        free = [[b.add_var(f"assoc[{m},{k}]", 0.0, 1.0, init=float(state.assoc[m, k]))
                 for k in range(K)] for m in range(M - 1)]
        last = [1.0 - sum((free[m][k] for m in range(1, M - 1)), free[0][k])
                for k in range(K)]
        assoc_exprs = free + [last]
        for k in range(K):
            b.affine_le(-last[k], f"assoc_last_lb[{k}]")
            b.affine_le(last[k] - 1.0, f"assoc_last_ub[{k}]")

    loads = _load_exprs(assoc_exprs, scn)
    time = _time_block(b, state, scn, loads, active_bs=np.ones(M, bool))

    exp = state.surrogate_point or {}
    exp_assoc = exp.get("assoc", state.assoc)

    # rate-margin auxiliaries and their concave caps (one family per direction)
    margins = {}
    norm = max(1.0, scn.qinv_target)
    for tag, sinr, t_exprs, bits, cur in (
            ("up", sinr_up, time["t_up"], cfg.bits_uplink, state.margin_up),
            ("dn", sinr_dn, time["t_dn"], cfg.bits_downlink, state.margin_dn)):
        mat, idx_rows, coefs, lam, bws, names = [], [], [], [], [], []
        for m in range(M):
            row = []
            for k in range(K):
                v = b.add_var(f"margin_{tag}[{m},{k}]", -MARGIN_BOX, MARGIN_BOX,
                              scale=10.0, init=float(cur[m, k]) - 1e-6 * (1 + abs(cur[m, k])))
                idx_rows.append([t_exprs[m].arrays()[0][0], v.arrays()[0][0]])
                coefs.append(math.log2(1.0 + sinr[m, k]))
                lam.append(float(bits[k]))
                bws.append(float(bw[m]))
                names.append(f"rate_{tag}[{m},{k}]")
                row.append(v)
            mat.append(row)
        b.vector_smooth_le(idx_rows, _margin_family(coefs, lam, bws, norm), names)
        margins[tag] = mat

    # decoupled bilinear reliability constraints per plant
    rhs = 4.0 * comms.LOG2E * comms.q_inv(cfg.outage_threshold)
    for tag, cur_margin in (("up", exp.get("margin_up", state.margin_up)),
                            ("dn", exp.get("margin_dn", state.margin_dn))):
        for k in range(K):
            lin = Affine.of(rhs)
            sq = []
            for m in range(M):
                a_expr = assoc_exprs[m][k]
                g_expr = margins[tag][m][k]
                a0 = float(exp_assoc[m, k])
                g0 = float(cur_margin[m, k])
                s0 = a0 + g0
                # tangent of the growing square (a + g)^2 at (a0, g0)
                lin = lin - (a_expr * (2.0 * s0) + g_expr * (2.0 * s0) - s0 * s0)
                sq.append((1.0, a_expr - g_expr))
            b.quad_le(sq, lin, f"reliability_{tag}[{k}]")

    # uplink power-cap coupling at fixed powers
    if not (fix_alpha or M == 1):
        for m in range(M):
            for k in range(K):
                cap = float(cfg.uplink_power_cap_w[k])
                b.affine_le(assoc_exprs[m][k] * float(state.power_up[m, k]) - cap,
                            f"up_cap[{m},{k}]")

    prog = b.build()
    index = {"t_up": time["t_up"], "t_dn": time["t_dn"], "T": time["T"],
             "c": time["c"], "t_cmp": time["t_cmp"],
             "assoc": assoc_exprs if not fix_alpha else None,
             "margin_up": margins["up"], "margin_dn": margins["dn"],
             "t_cmp_bs": time.get("t_cmp_bs")}
    return prog, index


def build_pt_subproblem(state: SolverState, scn: Scenario) -> tuple[ConvexProgram, dict]:
    """Power-and-time block at fixed association.

    Spectral-efficiency auxiliaries bound each link's log-SINR with the
    interference log linearized at the expansion powers; sqrt-slot auxiliaries
    couple to slots through the convex cap tau^2 <= t; the bilinear
    tau * spectral-efficiency product is decoupled as in the association block.
    """
    M, K = scn.topology.num_bs, scn.topology.num_plants
    cfg = scn.config
    b = ProgramBuilder()

    act = state.active_pairs()
    active_bs = act.any(axis=1)
    bw = state.bandwidths(cfg)
    sqrt_bw = np.sqrt(bw)
    exp = state.surrogate_point or {}
    exp_se_up = exp.get("se_up", state.se_up)
    exp_se_dn = exp.get("se_dn", state.se_dn)
    exp_sqt_up = exp.get("sqt_up", state.sqrt_t_up)
    exp_sqt_dn = exp.get("sqt_dn", state.sqrt_t_dn)

    loads = [Affine.of(float(v)) for v in compute_loads(state.assoc, cfg)]
    time = _time_block(b, state, scn, loads, active_bs=active_bs)

    # power variables (inactive pairs are absent and read as zero)
    p_up, p_dn = {}, {}
    for m in range(M):
        for k in range(K):
            if not act[m, k]:
                continue
            a = float(state.assoc[m, k])
            cap = float(cfg.uplink_power_cap_w[k])
            p_up[m, k] = b.add_var(f"p_up[{m},{k}]", 0.0, 2.0 * cap / a,
                                   scale=cap, init=float(state.power_up[m, k]))
            b.affine_le(p_up[m, k] * a - cap, f"up_cap[{m},{k}]")
            budget = float(cfg.downlink_power_budget_w[m])
            p_dn[m, k] = b.add_var(f"p_dn[{m},{k}]", 0.0, min(2.0 / a, 20.0) * budget,
                                   scale=budget / max(1, act[m].sum()),
                                   init=float(state.power_down[m, k]))
    for m in range(M):
        if not active_bs[m]:
            continue
        total = Affine.of(-float(cfg.downlink_power_budget_w[m]))
        for k in range(K):
            if act[m, k]:
                total = total + p_dn[m, k] * float(state.assoc[m, k])
        b.affine_le(total, f"dn_budget[{m}]")

    # sqrt-slot auxiliaries coupled by the convex cap tau^2 <= t
    sq_lo, sq_hi = 0.5 * math.sqrt(SLOT_FLOOR), math.sqrt(T_CAP)
    tau_up, tau_dn = [], []
    for tag, store, t_exprs, cur in (("up", tau_up, time["t_up"], state.sqrt_t_up),
                                     ("dn", tau_dn, time["t_dn"], state.sqrt_t_dn)):
        for m in range(M):
            if not active_bs[m]:
                store.append(None)
                continue
            v = b.add_var(f"sqt_{tag}[{m}]", sq_lo, sq_hi, scale=3e-2,
                          init=float(cur[m]) * (1.0 - 1e-9))
            b.quad_le([(1.0, v)], Affine() - t_exprs[m], f"sqt_cap_{tag}[{m}]")
            store.append(v)

    # spectral-efficiency auxiliaries with linearized interference
    se_up, se_dn = {}, {}
    max_act = int(max(act[m].sum() for m in range(M)))
    for tag, store, cur, p_vars, p0_full, gain in (
            ("up", se_up, state.se_up, p_up, state.power_up, scn.gains.uplink_gain),
            ("dn", se_dn, state.se_dn, p_dn, state.power_down, scn.gains.downlink_gain)):
        idx_rows, gain_rows, gc_rows, c0s, names = [], [], [], [], []
        for m in range(M):
            ids = [k for k in range(K) if act[m, k]]
            if not ids:
                continue
            p0 = np.array([p0_full[m, i] for i in ids])
            p_idx = [p_vars[m, i].arrays()[0][0] for i in ids]
            for k in ids:
                v = b.add_var(f"se_{tag}[{m},{k}]", -8.0, 64.0, scale=3.0,
                              init=float(cur[m, k]) - 1e-8 * (1 + abs(cur[m, k])))
                store[m, k] = v
                grow = np.array([gain[m, i, k] for i in ids])
                own = ids.index(k)
                interf0 = scn.noise_w + float(np.delete(grow, own) @ np.delete(p0, own))
                gcoef = comms.LOG2E * grow / interf0
                gcoef[own] = 0.0
                pad = max_act - len(ids)
                idx_rows.append([v.arrays()[0][0]] + p_idx + [0] * pad)
                gain_rows.append(np.pad(grow, (0, pad)))
                gc_rows.append(np.pad(gcoef, (0, pad)))
                c0s.append(math.log2(interf0) - float(gcoef @ p0))
                names.append(f"se_cap_{tag}[{m},{k}]")
        if names:
            b.vector_smooth_le(idx_rows,
                               _spectral_eff_family(gain_rows, gc_rows, c0s, scn.noise_w),
                               names)

    # decoupled reliability constraints per plant and direction
    target = comms.LOG2E * comms.q_inv(cfg.outage_threshold)
    norm = max(1.0, target)
    max_bs = int(max(act[:, k].sum() for k in range(K)))
    for tag, se, taus, bits, d_cur, t_cur in (
            ("up", se_up, tau_up, cfg.bits_uplink, exp_se_up, exp_sqt_up),
            ("dn", se_dn, tau_dn, cfg.bits_downlink, exp_se_dn, exp_sqt_dn)):
        idx_rows, W, SB, D0, T0, lam, names = [], [], [], [], [], [], []
        for k in range(K):
            ms = [m for m in range(M) if act[m, k]]
            pad = max_bs - len(ms)
            idx_rows.append([taus[m].arrays()[0][0] for m in ms] + [0] * pad
                            + [se[m, k].arrays()[0][0] for m in ms] + [0] * pad)
            W.append([float(state.assoc[m, k]) for m in ms] + [0.0] * pad)
            SB.append([float(sqrt_bw[m]) for m in ms] + [1.0] * pad)
            D0.append([float(d_cur[m, k]) for m in ms] + [0.0] * pad)
            T0.append([float(t_cur[m]) for m in ms] + [1.0] * pad)
            lam.append(float(bits[k]))
            names.append(f"reliability_{tag}[{k}]")
        b.vector_smooth_le(idx_rows,
                           _reliability_family(W, lam, SB, D0, T0, target, norm),
                           names)

    prog = b.build()
    index = {"t_up": time["t_up"], "t_dn": time["t_dn"], "T": time["T"],
             "c": time["c"], "t_cmp": time["t_cmp"], "assoc": None,
             "p_up": p_up, "p_dn": p_dn,
             "se_up": se_up, "se_dn": se_dn, "tau_up": tau_up, "tau_dn": tau_dn,
             "t_cmp_bs": time.get("t_cmp_bs")}
    return prog, index


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def apply_solution(state: SolverState, scn: Scenario, index: dict,
                   x: np.ndarray) -> SolverState:
    """New state with decision variables from a solver point and auxiliaries
    reset to their defining values."""
    out = state.copy()
    out.t_up = np.array([e.value(x) for e in index["t_up"]])
    out.t_dn = np.array([e.value(x) for e in index["t_dn"]])
    if index.get("t_cmp_bs") is not None:
        # drop the epigraph slack so the period identity holds exactly
        out.t_cmp_bs = np.array([e.value(x) for e in index["t_cmp_bs"]])
        out.t_cmp = float(out.t_cmp_bs.max())
        out.period = float(out.t_up.max() + out.t_cmp + out.t_dn.max())
    else:
        out.t_cmp = float(index["t_cmp"].value(x))
        out.period = float(index["T"].value(x))
    if index.get("assoc") is not None:
        M, K = state.assoc.shape
        alpha = np.array([[index["assoc"][m][k].value(x) for k in range(K)]
                          for m in range(M)])
        alpha = np.clip(alpha, 0.0, 1.0)
        alpha /= alpha.sum(axis=0, keepdims=True)
        out.assoc = alpha
    if index.get("p_up") is not None:
        p_up = np.zeros_like(state.power_up)
        p_dn = np.zeros_like(state.power_down)
        for (m, k), e in index["p_up"].items():
            p_up[m, k] = max(0.0, e.value(x))
        for (m, k), e in index["p_dn"].items():
            p_dn[m, k] = max(0.0, e.value(x))
        out.power_up, out.power_down = p_up, p_dn
    out.surrogate_point = _raw_point(state, index, x, out.assoc)
    reset_auxiliaries(out, scn)
    return out


def _raw_point(state: SolverState, index: dict, x: np.ndarray,
               assoc: np.ndarray) -> dict:
    """Solver-point auxiliary values kept as the next surrogate's expansion."""
    M, K = state.assoc.shape
    point: dict = {"assoc": assoc.copy()}
    if "margin_up" in index:
        for key in ("margin_up", "margin_dn"):
            point[key] = np.array([[index[key][m][k].value(x) for k in range(K)]
                                   for m in range(M)])
    if "se_up" in index:
        for key, fallback in (("se_up", state.se_up), ("se_dn", state.se_dn)):
            vals = fallback.copy()
            for (m, k), e in index[key].items():
                vals[m, k] = e.value(x)
            point[key] = vals
        for key, exprs, fallback in (("sqt_up", index["tau_up"], state.sqrt_t_up),
                                     ("sqt_dn", index["tau_dn"], state.sqrt_t_dn)):
            vals = fallback.copy()
            for m, e in enumerate(exprs):
                if e is not None:
                    vals[m] = e.value(x)
            point[key] = vals
    return point
