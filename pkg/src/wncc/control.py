"""Plant discretization, stability-constraint assembly and closed-loop
Monte Carlo simulation.

The per-sample contraction requirement on the quadratic energy x^T Q x, taken
at the most pessimistic admissible outage, reduces (to first order in the
sample period T) to the matrix inequality

    quad_coeff * T^2 + lin_coeff * T + (decay_rate - 1) * Q  >=  0,

whose coefficient pair (quad_coeff, lin_coeff) is assembled by
``stability_matrices``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigError, read_kv_file

__all__ = [
    "PlantModel",
    "DiscreteDynamics",
    "StabilityForm",
    "Trajectory",
    "default_plant",
    "load_plant",
    "discretize",
    "stability_matrices",
    "stability_holds",
    "stability_margin",
    "feasible_T_interval",
    "simulate_closed_loop",
    "average_control_cost",
    "lyapunov_drift_check",
    "export_trajectories_csv",
]

PSD_TOL = -1e-9  # minimum-eigenvalue tolerance for "holds"


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time plant with linear negative feedback.

    ``A`` drifts the state, ``B`` couples the input, ``Q`` weights the energy
    measure, ``R`` is the disturbance covariance, ``feedback_gain`` maps state
    to actuation on successful round trips, and ``decay_rate`` in (0, 1) is the
    required per-sample contraction of E[x^T Q x].
    """

    dim: int
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    feedback_gain: np.ndarray
    decay_rate: float

    def __post_init__(self):
        for name in ("A", "B", "Q", "R", "feedback_gain"):
            mat = np.asarray(getattr(self, name), dtype=float).reshape(self.dim, self.dim)
            object.__setattr__(self, name, mat)
        if not 0.0 < self.decay_rate < 1.0:
            raise ValueError("decay_rate must lie in (0, 1)")
        if np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))[0] <= 0:
            raise ValueError("Q must be positive definite")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T))[0] < -1e-12:
            raise ValueError("R must be positive semidefinite")


@dataclass(frozen=True)
class DiscreteDynamics:
    """One-sample transition matrices at period T.

    ``state_mat`` propagates the state, ``input_mat`` couples the held input.
    ``mode`` records whether the matrix exponential or its first-order
    truncation was used.
    """

    state_mat: np.ndarray
    input_mat: np.ndarray
    period: float
    mode: str

    def closed_loop_mat(self, plant: PlantModel) -> np.ndarray:
        return self.state_mat - self.input_mat @ plant.feedback_gain

    def open_loop_mat(self) -> np.ndarray:
        return self.state_mat


@dataclass(frozen=True)
class StabilityForm:
    """Coefficients of the period polynomial in the stability inequality."""

    quad_coeff: np.ndarray  # multiplies T^2
    lin_coeff: np.ndarray   # multiplies T

    def __post_init__(self):
        for name in ("quad_coeff", "lin_coeff"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if np.abs(mat - mat.T).max() > 1e-12 * max(1.0, np.abs(mat).max()):
                raise ValueError(f"{name} must be symmetric")


@dataclass
class Trajectory:
    """Simulated closed-loop sample path for one plant."""

    states: np.ndarray        # (H+1, dim)
    outage_flags: np.ndarray  # (H,) bool, True when the round trip failed
    cost: np.ndarray          # (H+1,) squared state norms


def default_plant(feedback_pole: float = 100.0, decay_rate: float = 0.8,
                  dim: int = 2) -> PlantModel:
    """Reference double-integrator-like plant with pole-placed feedback.

    The gain solves A - B*K = -feedback_pole * I, which makes the nominal
    closed loop a pure contraction and gives closed-form feasibility windows.
    """
    A = np.array([[1.0, 1.0], [0.0, 1.0]]) if dim == 2 else np.eye(dim)
    B = np.eye(dim)
    gain = np.linalg.solve(B, A + feedback_pole * np.eye(dim))
    return PlantModel(dim=dim, A=A, B=B, Q=np.eye(dim), R=np.eye(dim),
                      feedback_gain=gain, decay_rate=decay_rate)


def _parse_matrix(key: str, value: str, dim: int) -> np.ndarray:
    rows = [r for r in value.split(";") if r.strip()]
    if len(rows) != dim:
        raise ConfigError(f"{key}: expected {dim} rows, got {len(rows)}")
    try:
        mat = np.array([[float(v) for v in row.split(",")] for row in rows])
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    if mat.shape != (dim, dim):
        raise ConfigError(f"{key}: expected a {dim}x{dim} matrix")
    return mat


def load_plant(path) -> PlantModel:
    """Read the (shared) plant description from a scenario file.

    Missing plant keys fall back to the reference plant values.
    """
    entries = read_kv_file(path)
    dim = int(float(entries.get("plant_dim", 2)))
    pole = float(entries.get("feedback_pole", 100.0))
    ref = default_plant(feedback_pole=pole, decay_rate=float(entries.get("decay_rate", 0.8)),
                        dim=dim)
    A = _parse_matrix("plant_a", entries["plant_a"], dim) if "plant_a" in entries else ref.A
    B = _parse_matrix("plant_b", entries["plant_b"], dim) if "plant_b" in entries else ref.B
    Q = _parse_matrix("plant_q", entries["plant_q"], dim) if "plant_q" in entries else ref.Q
    R = _parse_matrix("plant_r", entries["plant_r"], dim) if "plant_r" in entries else ref.R
    if "plant_gain" in entries:
        gain = _parse_matrix("plant_gain", entries["plant_gain"], dim)
    else:
        gain = np.linalg.solve(B, A + pole * np.eye(dim))
    return PlantModel(dim=dim, A=A, B=B, Q=Q, R=R, feedback_gain=gain,
                      decay_rate=ref.decay_rate)


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def _expm(mat: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring of the power series."""
    norm = np.abs(mat).sum(axis=1).max()
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    small = mat / (2.0 ** squarings)
    term = np.eye(mat.shape[0])
    total = term.copy()
    for j in range(1, 31):
        term = term @ small / j
        total += term
        if np.abs(term).max() < 1e-18 * max(1.0, np.abs(total).max()):
            break
    for _ in range(squarings):
        total = total @ total
    return total


def discretize(plant: PlantModel, period: float, mode: str = "exact") -> DiscreteDynamics:
    """Transition matrices for a zero-order hold of length ``period``.

    ``exact`` evaluates e^{T A} and its integral against B; ``first_order``
    truncates both to I + T A and T B.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    a = plant.dim
    if mode == "first_order":
        state = np.eye(a) + period * plant.A
        inp = period * plant.B
    elif mode == "exact":
        # Augmented exponential: exp([[A, I], [0, 0]] T) holds e^{TA} and its integral.
        aug = np.zeros((2 * a, 2 * a))
        aug[:a, :a] = plant.A
        aug[:a, a:] = np.eye(a)
        big = _expm(aug * period)
        state = big[:a, :a]
        inp = big[:a, a:] @ plant.B
    else:
        raise ValueError(f"unknown discretization mode {mode!r}")
    return DiscreteDynamics(state_mat=state, input_mat=inp, period=period, mode=mode)


# ---------------------------------------------------------------------------
# stability forms
# ---------------------------------------------------------------------------

def stability_matrices(plant: PlantModel, outage_threshold: float) -> StabilityForm:
    """Assemble the period-polynomial coefficients of the stability inequality.

    Derived from the expected one-step energy contraction at round-trip
    success probability (1 - outage_threshold)^2, with first-order transition
    matrices.  Both outputs are explicitly symmetrized.
    """
    A, B, Q, K = plant.A, plant.B, plant.Q, plant.feedback_gain
    w = (1.0 - outage_threshold) ** 2
    lin = w * (K.T @ B.T @ Q + Q @ B @ K) - (A.T @ Q + Q @ A)
    quad = w * (A.T @ Q @ B @ K + K.T @ B.T @ Q @ A - K.T @ B.T @ Q @ B @ K) - A.T @ Q @ A
    sym = lambda X: 0.5 * (X + X.T)
    return StabilityForm(quad_coeff=sym(quad), lin_coeff=sym(lin))


def _stability_matrix(form: StabilityForm, Q: np.ndarray, decay_rate: float,
                      period: float, period_sq: float) -> np.ndarray:
    return form.quad_coeff * period_sq + form.lin_coeff * period + (decay_rate - 1.0) * Q


def stability_margin(form: StabilityForm, Q: np.ndarray, decay_rate: float,
                     period: float, period_sq: float | None = None) -> float:
    """Minimum eigenvalue of the stability matrix; >= 0 means the period is admissible."""
    c = period * period if period_sq is None else period_sq
    mat = _stability_matrix(form, Q, decay_rate, period, c)
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])


def stability_holds(form: StabilityForm, Q: np.ndarray, decay_rate: float,
                    period: float, period_sq: float | None = None) -> bool:
    """Whether the stability inequality holds at (period, period_sq)."""
    if period <= 0:
        raise ValueError("period must be positive")
    return stability_margin(form, Q, decay_rate, period, period_sq) >= PSD_TOL


def feasible_T_interval(form: StabilityForm, Q: np.ndarray, decay_rate: float,
                        T_cap: float = 10.0) -> tuple[float, float] | None:
    """Endpoints of the first maximal admissible period interval in (0, T_cap].

    Grid scan followed by eigenvalue bisection to 1e-10 relative; returns
    None when no admissible period exists below the cap.
    """
    grid = np.geomspace(1e-9, T_cap, 4096)
    ok = np.array([stability_holds(form, Q, decay_rate, t) for t in grid])
    if not ok.any():
        return None
    first = int(np.argmax(ok))
    last = first
    while last + 1 < len(grid) and ok[last + 1]:
        last += 1

    def bisect(lo, hi, want_inside_right):
        # invariant: exactly one endpoint is admissible
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if stability_holds(form, Q, decay_rate, mid) == want_inside_right:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-10 * max(hi, 1e-12):
                break
        return 0.5 * (lo + hi)

    t_lo = grid[first] if first == 0 else bisect(grid[first - 1], grid[first], True)
    if last == len(grid) - 1:
        t_hi = grid[-1]
    else:
        t_hi = bisect(grid[last], grid[last + 1], False)
    return (float(t_lo), float(t_hi))


# ---------------------------------------------------------------------------
# closed-loop simulation
# ---------------------------------------------------------------------------

def simulate_closed_loop(plant: PlantModel, period: float, outage: float,
                         horizon: int, seed: int, mode: str = "exact",
                         x0: np.ndarray | None = None,
                         noise_cov: np.ndarray | None = None) -> Trajectory:
    """Simulate ``horizon`` samples with per-sample round-trip failures.

    On success the held input is -feedback_gain @ x, on failure the loop runs
    open.  Disturbances are Gaussian with covariance ``noise_cov`` (defaults
    to plant.R).  Deterministic per seed.
    """
    if not 0.0 <= outage <= 1.0:
        raise ValueError("outage must lie in [0, 1]")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    dyn = discretize(plant, period, mode)
    closed = dyn.closed_loop_mat(plant)
    opened = dyn.open_loop_mat()
    R = plant.R if noise_cov is None else np.asarray(noise_cov, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x73696D]))
    a = plant.dim
    if x0 is None:
        direction = rng.standard_normal(a)
        x0 = direction / max(np.linalg.norm(direction), 1e-300)
    chol = np.linalg.cholesky(R + 1e-300 * np.eye(a)) if np.any(R) else np.zeros((a, a))
    fails = rng.random(horizon) < outage
    noise = rng.standard_normal((horizon, a)) @ chol.T if np.any(R) else np.zeros((horizon, a))
    states = np.empty((horizon + 1, a))
    states[0] = x0
    for i in range(horizon):
        mat = opened if fails[i] else closed
        states[i + 1] = mat @ states[i] + noise[i]
    cost = np.einsum("na,na->n", states, states)
    return Trajectory(states=states, outage_flags=fails, cost=cost)


def average_control_cost(trajectories: list[Trajectory],
                         n_samples: int | None = None) -> float:
    """Sum over plants of the per-sample mean squared state norm.

    Sample 0 (the initial state) is excluded from the average.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    total = 0.0
    for traj in trajectories:
        n = (len(traj.cost) - 1) if n_samples is None else n_samples
        total += float(traj.cost[1:n + 1].sum()) / n
    return total


def lyapunov_drift_check(plant: PlantModel, period: float, outage: float,
                         states: np.ndarray, n_draws: int, seed: int,
                         mode: str = "exact",
                         noise_cov: np.ndarray | None = None) -> dict:
    """Empirical one-step energy drift versus the contraction bound.

    For each given state x, estimates E[x'^T Q x' | x] over ``n_draws``
    simulated transitions and compares it with
    decay_rate * x^T Q x + trace(Q @ noise_cov).
    Returns arrays of empirical means, bounds and standard errors.
    """
    dyn = discretize(plant, period, mode)
    closed = dyn.closed_loop_mat(plant)
    opened = dyn.open_loop_mat()
    Q = plant.Q
    R = plant.R if noise_cov is None else np.asarray(noise_cov, dtype=float)
    chol = np.linalg.cholesky(R + 1e-300 * np.eye(plant.dim)) if np.any(R) \
        else np.zeros((plant.dim, plant.dim))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x647266]))
    states = np.atleast_2d(np.asarray(states, dtype=float))
    emp, se, bound = [], [], []
    for x in states:
        fails = rng.random(n_draws) < outage
        nxt = np.where(fails[:, None], x @ opened.T, x @ closed.T)
        nxt = nxt + rng.standard_normal((n_draws, plant.dim)) @ chol.T
        energy = np.einsum("na,ab,nb->n", nxt, Q, nxt)
        emp.append(float(energy.mean()))
        se.append(float(energy.std(ddof=1) / math.sqrt(n_draws)))
        bound.append(float(plant.decay_rate * x @ Q @ x + np.trace(Q @ R)))
    return {"empirical": np.array(emp), "stderr": np.array(se), "bound": np.array(bound)}


def export_trajectories_csv(trajectories: list[Trajectory], path) -> None:
    """Write sample paths as CSV: plant, sample, state components, cost, outage flag."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    dim = trajectories[0].states.shape[1]
    cols = ",".join(f"x{i}" for i in range(dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"plant,sample,{cols},cost,outage\n")
        for k, traj in enumerate(trajectories):
            for i, state in enumerate(traj.states):
                flag = int(traj.outage_flags[i - 1]) if i > 0 else 0
                vals = ",".join(f"{v:.17g}" for v in state)
                fh.write(f"{k},{i},{vals},{traj.cost[i]:.17g},{flag}\n")
