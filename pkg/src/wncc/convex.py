"""Self-contained smooth convex program solver.

A program is a linear objective over box-bounded variables subject to a small
set of constraint atoms: affine inequalities, convex quadratics, smooth convex
scalar callbacks, and small affine matrix inequalities.  It is solved with a
phase-I feasibility stage followed by a central-path log-barrier Newton method
with backtracking line search.

Atoms reference variables through an index subset so gradients and Hessians
assemble sparsely.  Callbacks must be convex and smooth on an open domain that
is implied by the variable boxes; they are only evaluated inside it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Affine",
    "AffineIneq",
    "QuadIneq",
    "SmoothIneq",
    "MatrixIneq",
    "ConvexProgram",
    "ProgramBuilder",
    "Solution",
    "ViolationReport",
    "solve",
    "check_solution",
]

DEFAULT_GAP_TOL = 1e-8
MAX_NEWTON_STEPS = 500
PHASE1_SLACK_TOL = 1e-7


# ---------------------------------------------------------------------------
# expressions and atoms
# ---------------------------------------------------------------------------

class Affine:
    """Sparse affine expression ``sum coef[i] * x[i] + const``."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: dict | None = None, const: float = 0.0):
        self.coef = dict(coef or {})
        self.const = float(const)

    @staticmethod
    def var(i: int) -> "Affine":
        return Affine({int(i): 1.0})

    @staticmethod
    def of(c: float) -> "Affine":
        return Affine({}, c)

    def copy(self) -> "Affine":
        return Affine(self.coef, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, Affine):
            for i, c in other.coef.items():
                out.coef[i] = out.coef.get(i, 0.0) + c
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return Affine({i: -c for i, c in self.coef.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Affine) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        s = float(scalar)
        return Affine({i: c * s for i, c in self.coef.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.coef.items())

    def arrays(self) -> tuple[np.ndarray, np.ndarray, float]:
        idx = np.array(sorted(self.coef), dtype=int)
        a = np.array([self.coef[i] for i in idx], dtype=float)
        return idx, a, self.const


@dataclass
class AffineIneq:
    """a @ x[idx] + b <= 0."""

    idx: np.ndarray
    a: np.ndarray
    b: float
    name: str = ""

    def value(self, x):
        return float(self.a @ x[self.idx] + self.b)


@dataclass
class QuadIneq:
    """x[idx] @ P @ x[idx] + q @ x[idx] + r <= 0 with P positive semidefinite."""

    idx: np.ndarray
    P: np.ndarray
    q: np.ndarray
    r: float
    name: str = ""

    def __post_init__(self):
        self.P = 0.5 * (self.P + self.P.T)
        if self.P.size and np.linalg.eigvalsh(self.P)[0] < -1e-9 * max(1.0, np.abs(self.P).max()):
            raise ValueError(f"quadratic atom {self.name!r} is not convex")

    def value(self, x):
        v = x[self.idx]
        return float(v @ self.P @ v + self.q @ v + self.r)

    def grad(self, x):
        v = x[self.idx]
        return 2.0 * self.P @ v + self.q


@dataclass
class SmoothIneq:
    """f(x[idx]) <= 0 for a smooth convex callback.

    ``func(sub)`` returns (value, gradient, hessian) over the subset.  The open
    domain of ``func`` must be implied by the variable boxes.
    """

    idx: np.ndarray
    func: object
    name: str = ""

    def value(self, x):
        return float(self.func(x[self.idx])[0])


@dataclass
class VectorSmooth:
    """A family of structurally identical smooth convex constraints.

    ``idx`` has one row of variable indices per member (rows may be padded;
    padded entries must contribute zero gradient and Hessian).
    ``func(X, derivs)`` takes the (members, width) matrix of variable values
    and returns the member values, or (values, gradients, hessians) when
    ``derivs`` is true.
    """

    idx: np.ndarray   # (members, width) int
    func: object
    names: list

    def values(self, x):
        return np.asarray(self.func(x[self.idx], False), dtype=float)


@dataclass
class MatrixIneq:
    """M0 + sum_j x[terms[j][0]] * terms[j][1] >= 0 (positive semidefinite)."""

    M0: np.ndarray
    terms: list  # [(var_index, matrix)]
    name: str = ""

    def matrix(self, x):
        M = self.M0.copy()
        for i, Mi in self.terms:
            M += x[i] * Mi
        return 0.5 * (M + M.T)

    def min_eig(self, x):
        return float(np.linalg.eigvalsh(self.matrix(x))[0])


@dataclass
class ConvexProgram:
    n: int
    objective: np.ndarray
    affines: list = field(default_factory=list)
    quads: list = field(default_factory=list)
    smooths: list = field(default_factory=list)
    vsmooths: list = field(default_factory=list)
    lmis: list = field(default_factory=list)
    lb: np.ndarray = None
    ub: np.ndarray = None
    scales: np.ndarray = None
    x0: np.ndarray = None
    var_names: list = field(default_factory=list)

    def __post_init__(self):
        if self.lb is None:
            self.lb = np.full(self.n, -np.inf)
        if self.ub is None:
            self.ub = np.full(self.n, np.inf)
        if self.scales is None:
            self.scales = np.ones(self.n)

    @property
    def num_scalar_constraints(self) -> int:
        return (len(self.affines) + len(self.quads) + len(self.smooths)
                + sum(v.idx.shape[0] for v in self.vsmooths))

    def barrier_weight(self) -> float:
        """Self-concordance parameter: scalar atoms + LMI dims + finite bound sides."""
        m = self.num_scalar_constraints
        m += sum(lmi.M0.shape[0] for lmi in self.lmis)
        m += int(np.isfinite(self.lb).sum() + np.isfinite(self.ub).sum())
        return float(max(m, 1))


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    status: str                 # optimal | infeasible | max_iter
    kkt_residual: float
    barrier_iters: int
    phase1_slack: float = float("nan")
    stage_objectives: list = field(default_factory=list)


@dataclass
class ViolationReport:
    """Per-atom feasibility report.

    ``entries`` holds (name, kind, value); scalar atoms report f(x) (feasible
    when <= 0), matrix atoms report the minimum eigenvalue (feasible when
    >= 0), bounds report the signed excursion outside the box.
    """

    entries: list

    @property
    def max_violation(self) -> float:
        worst = 0.0
        for _, kind, val in self.entries:
            worst = max(worst, -val if kind == "lmi" else val)
        return worst

    def ok(self, tol: float = 1e-7) -> bool:
        return self.max_violation <= tol

    def worst(self):
        key = lambda e: (-e[2] if e[1] == "lmi" else e[2])
        return max(self.entries, key=key)


def check_solution(program: ConvexProgram, x: np.ndarray) -> ViolationReport:
    """Evaluate every atom at ``x`` and report signed violations."""
    entries = []
    for atom in program.affines:
        entries.append((atom.name, "affine", atom.value(x)))
    for atom in program.quads:
        entries.append((atom.name, "quad", atom.value(x)))
    for atom in program.smooths:
        entries.append((atom.name, "smooth", atom.value(x)))
    for fam in program.vsmooths:
        for name, val in zip(fam.names, fam.values(x)):
            entries.append((name, "smooth", float(val)))
    for atom in program.lmis:
        entries.append((atom.name, "lmi", atom.min_eig(x)))
    for i in range(program.n):
        name = program.var_names[i] if i < len(program.var_names) else f"x{i}"
        if np.isfinite(program.lb[i]):
            entries.append((f"{name}>=lb", "bound", float(program.lb[i] - x[i])))
        if np.isfinite(program.ub[i]):
            entries.append((f"{name}<=ub", "bound", float(x[i] - program.ub[i])))
    return ViolationReport(entries)


# ---------------------------------------------------------------------------
# builder
# ---------------------------------------------------------------------------

class ProgramBuilder:
    """Incremental construction of a ConvexProgram from affine expressions."""

    def __init__(self):
        self.names = []
        self.lb = []
        self.ub = []
        self.scale = []
        self.init = []
        self._affines = []
        self._quads = []
        self._smooths = []
        self._vsmooths = []
        self._lmis = []
        self._objective = None

    def add_var(self, name: str, lb: float, ub: float, scale: float = 1.0,
                init: float | None = None) -> Affine:
        if not lb < ub:
            raise ValueError(f"variable {name}: need lb < ub, got [{lb}, {ub}]")
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.scale.append(scale)
        self.init.append(init if init is not None else 0.5 * (max(lb, -1e3) + min(ub, 1e3)))
        return Affine.var(len(self.names) - 1)

    def affine_le(self, expr: Affine, name: str = "") -> None:
        """expr <= 0."""
        idx, a, b = expr.arrays()
        if idx.size == 0:
            if b > 0:
                raise ValueError(f"constant constraint {name!r} is infeasible: {b} <= 0")
            return
        self._affines.append(AffineIneq(idx, a, b, name))

    def quad_le(self, sq_terms: list, lin: Affine, name: str = "") -> None:
        """sum coef * (affine)^2 + lin <= 0 with coef >= 0 (convex by construction)."""
        involved = set(lin.coef)
        for coef, expr in sq_terms:
            if coef < 0:
                raise ValueError(f"quadratic atom {name!r}: negative square coefficient")
            involved.update(expr.coef)
        idx = np.array(sorted(involved), dtype=int)
        pos = {i: j for j, i in enumerate(idx)}
        P = np.zeros((idx.size, idx.size))
        q = np.zeros(idx.size)
        r = lin.const
        for i, c in lin.coef.items():
            q[pos[i]] += c
        for coef, expr in sq_terms:
            a = np.zeros(idx.size)
            for i, c in expr.coef.items():
                a[pos[i]] = c
            P += coef * np.outer(a, a)
            q += 2.0 * coef * expr.const * a
            r += coef * expr.const ** 2
        self._quads.append(QuadIneq(idx, P, q, r, name))

    def smooth_le(self, indices, func, name: str = "") -> None:
        self._smooths.append(SmoothIneq(np.asarray(indices, dtype=int), func, name))

    def vector_smooth_le(self, idx_matrix, func, names) -> None:
        idx = np.asarray(idx_matrix, dtype=int)
        if idx.ndim != 2 or idx.shape[0] != len(names):
            raise ValueError("vector smooth family needs one index row per name")
        self._vsmooths.append(VectorSmooth(idx, func, list(names)))

    def lmi_ge(self, M0: np.ndarray, terms: list, name: str = "") -> None:
        """M0 + sum expr_j * M_j >= 0 where each term is (Affine, matrix)."""
        M0 = np.asarray(M0, dtype=float).copy()
        acc = {}
        for expr, Mj in terms:
            M0 += expr.const * Mj
            for i, c in expr.coef.items():
                acc[i] = acc.get(i, np.zeros_like(M0)) + c * Mj
        self._lmis.append(MatrixIneq(M0, sorted(acc.items()), name))

    def minimize(self, expr: Affine) -> None:
        self._objective = expr

    def build(self) -> ConvexProgram:
        n = len(self.names)
        if self._objective is None:
            raise ValueError("no objective set")
        c = np.zeros(n)
        for i, v in self._objective.coef.items():
            c[i] = v
        prog = ConvexProgram(
            n=n, objective=c,
            affines=self._affines, quads=self._quads,
            smooths=self._smooths, vsmooths=self._vsmooths, lmis=self._lmis,
            lb=np.array(self.lb), ub=np.array(self.ub),
            scales=np.array(self.scale), x0=np.array(self.init),
            var_names=list(self.names),
        )
        return prog


# ---------------------------------------------------------------------------
# barrier machinery
# ---------------------------------------------------------------------------

class _Barrier:
    """Scaled log-barrier over a program, optionally with a slack variable.

    Operates on y with x = scales * y.  With ``slack=True`` the last coordinate
    of the working vector is a slack s and every atom is relaxed to f(x) <= s
    (matrix atoms to M(x) + s I >= 0); boxes stay hard.  Affine atoms and box
    barriers are evaluated in batch; quadratic and callback atoms scatter their
    contributions through precomputed flat Hessian indices.
    """

    def __init__(self, program: ConvexProgram, slack: bool = False):
        self.p = program
        self.s = program.scales
        self.slack = slack
        self.n = program.n + (1 if slack else 0)
        self.lb = program.lb / self.s
        self.ub = program.ub / self.s
        self.fin_lb = np.where(np.isfinite(self.lb))[0]
        self.fin_ub = np.where(np.isfinite(self.ub))[0]
        n = program.n
        # batched affine atoms over y (normalized to O(1) rows)
        self.A = np.zeros((len(program.affines), self.n))
        self.ab = np.zeros(len(program.affines))
        for r, atom in enumerate(program.affines):
            row = atom.a * self.s[atom.idx]
            norm = max(np.abs(row).max(), abs(atom.b), 1e-9)
            self.A[r, atom.idx] = row / norm
            self.ab[r] = atom.b / norm
        # quadratic atoms: scaled data + flat scatter indices
        self.quads = []
        for atom in program.quads:
            ssub = self.s[atom.idx]
            Ps = atom.P * np.outer(ssub, ssub)
            qs = atom.q * ssub
            norm = max(np.abs(Ps).max(), np.abs(qs).max() if qs.size else 0.0,
                       abs(atom.r), 1e-9)
            flat = (atom.idx[:, None] * self.n + atom.idx[None, :]).ravel()
            self.quads.append((atom.idx, Ps / norm, qs / norm, atom.r / norm, flat))
        # smooth atoms: scale vectors + flat scatter indices
        self.smooths = []
        for atom in program.smooths:
            ssub = self.s[atom.idx]
            flat = (atom.idx[:, None] * self.n + atom.idx[None, :]).ravel()
            self.smooths.append((atom.idx, ssub, np.outer(ssub, ssub), atom.func, flat))
        # vectorized families: per-member scales + flat scatter indices
        self.vsmooths = []
        for fam in program.vsmooths:
            S = self.s[fam.idx]                       # (r, w)
            souter = S[:, :, None] * S[:, None, :]    # (r, w, w)
            flats = (fam.idx[:, :, None] * self.n + fam.idx[:, None, :]).reshape(
                fam.idx.shape[0], -1)
            self.vsmooths.append((fam.idx, S, souter, fam.func, flats))

    # --- raw constraint values at y (scaled), returning arrays ---
    def scalar_values(self, y):
        yv = y[:self.p.n]
        vals = list(self.A[:, :self.p.n] @ yv + self.ab)
        for idx, Ps, qs, r, _ in self.quads:
            v = yv[idx]
            vals.append(float(v @ Ps @ v + qs @ v + r))
        x = self.s * yv
        for idx, _, _, func, _ in self.smooths:
            vals.append(float(func(x[idx])[0]))
        for idx, _, _, func, _ in self.vsmooths:
            vals.extend(np.asarray(func(x[idx], False), dtype=float))
        return np.array(vals)

    def lmi_min_eigs(self, y):
        x = self.s * y[:self.p.n]
        return np.array([atom.min_eig(x) for atom in self.p.lmis]) if self.p.lmis else np.array([])

    def strictly_feasible(self, y, margin=0.0):
        yv = y[:self.p.n]
        if np.any(yv <= self.lb + margin) or np.any(yv >= self.ub - margin):
            return False
        sv = y[self.p.n] if self.slack else 0.0
        if np.any(self.scalar_values(y) >= sv - margin):
            return False
        eigs = self.lmi_min_eigs(y)
        return not (eigs.size and np.any(eigs <= -sv + margin))

    def value(self, y, mu, cost):
        """Barrier merit mu * cost(y) + phi(y); +inf outside the domain."""
        yv = y[:self.p.n]
        if np.any(yv[self.fin_lb] <= self.lb[self.fin_lb]) or \
           np.any(yv[self.fin_ub] >= self.ub[self.fin_ub]):
            return np.inf
        sv = y[self.p.n] if self.slack else 0.0
        gaps = sv - self.scalar_values(y)
        if np.any(gaps <= 0.0):
            return np.inf
        phi = -np.log(gaps).sum()
        x = self.s * yv
        for atom in self.p.lmis:
            M = atom.matrix(x)
            if self.slack:
                M = M + sv * np.eye(M.shape[0])
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                return np.inf
            phi -= 2.0 * np.log(np.diag(L)).sum()
        phi -= np.log(yv[self.fin_lb] - self.lb[self.fin_lb]).sum()
        phi -= np.log(self.ub[self.fin_ub] - yv[self.fin_ub]).sum()
        return mu * float(cost @ y) + phi

    def grad_hess(self, y, mu, cost):
        """Gradient and Hessian of the barrier merit at a strictly feasible y."""
        n = self.n
        g = mu * cost.copy()
        H = np.zeros((n, n))
        Hflat = H.ravel()
        yv = y[:self.p.n]
        x = self.s * yv
        sv = y[self.p.n] if self.slack else 0.0
        s_idx = self.p.n  # slack position

        # affine batch
        if self.A.shape[0]:
            vals = self.A[:, :self.p.n] @ yv + self.ab
            inv = 1.0 / (sv - vals)
            g += self.A.T @ inv
            H += (self.A.T * inv ** 2) @ self.A
            if self.slack:
                g[s_idx] -= inv.sum()
                H[s_idx, s_idx] += (inv ** 2).sum()
                cross = -(self.A.T @ inv ** 2)  # zero at the slack column itself
                H[:, s_idx] += cross
                H[s_idx, :] += cross

        def accumulate(idx, flat, val, gsub, hsub):
            gap = sv - val
            inv = 1.0 / gap
            g[idx] += inv * gsub
            contrib = inv ** 2 * np.multiply.outer(gsub, gsub)
            if hsub is not None:
                contrib = contrib + inv * hsub
            Hflat[flat] += contrib.ravel()
            if self.slack:
                g[s_idx] += -inv
                H[s_idx, s_idx] += inv ** 2
                H[idx, s_idx] += -inv ** 2 * gsub
                H[s_idx, idx] += -inv ** 2 * gsub

        for idx, Ps, qs, r, flat in self.quads:
            v = yv[idx]
            val = float(v @ Ps @ v + qs @ v + r)
            gsub = 2.0 * Ps @ v + qs
            accumulate(idx, flat, val, gsub, 2.0 * Ps)
        for idx, ssub, souter, func, flat in self.smooths:
            val, gsub, hsub = func(x[idx])
            accumulate(idx, flat, val, gsub * ssub, hsub * souter)
        for idx, S, souter, func, flats in self.vsmooths:
            vals, grads, hesses = func(x[idx], True)
            inv = 1.0 / (sv - vals)                       # (r,)
            gy = grads * S                                # (r, w)
            np.add.at(g, idx.ravel(), (inv[:, None] * gy).ravel())
            contrib = (inv[:, None, None] ** 2 * gy[:, :, None] * gy[:, None, :]
                       + inv[:, None, None] * hesses * souter)
            np.add.at(Hflat, flats.ravel(), contrib.ravel())
            if self.slack:
                g[s_idx] += -inv.sum()
                H[s_idx, s_idx] += (inv ** 2).sum()
                cross = -(inv ** 2)[:, None] * gy
                np.add.at(H[:, s_idx], idx.ravel(), cross.ravel())
                np.add.at(H[s_idx, :], idx.ravel(), cross.ravel())
        for atom in self.p.lmis:
            M = atom.matrix(x)
            d = M.shape[0]
            if self.slack:
                M = M + sv * np.eye(d)
            Minv = np.linalg.inv(M)
            terms = [(i, Mi * self.s[i]) for i, Mi in atom.terms]
            if self.slack:
                terms = terms + [(s_idx, np.eye(d))]
            prods = [(i, Minv @ Mi) for i, Mi in terms]
            for i, Pi in prods:
                g[i] += -np.trace(Pi)
                for j, Pj in prods:
                    H[i, j] += np.einsum("ab,ba->", Pi, Pj)
        # box barriers
        dl = yv[self.fin_lb] - self.lb[self.fin_lb]
        du = self.ub[self.fin_ub] - yv[self.fin_ub]
        g[self.fin_lb] += -1.0 / dl
        H[self.fin_lb, self.fin_lb] += 1.0 / dl ** 2
        g[self.fin_ub] += 1.0 / du
        H[self.fin_ub, self.fin_ub] += 1.0 / du ** 2
        return g, H


def _newton_stage(barrier, y, mu, cost, tol, budget, stop_when=None):
    """Damped Newton to the barrier center; returns (y, steps_used, converged).

    Stops on the Newton-decrement test, on a line-search stall, when the
    decrement hits its numerical floor, or when ``stop_when(y)`` turns true.
    """
    steps = 0
    best_dec = np.inf
    no_progress = 0
    eye = np.eye(barrier.n)
    while steps < budget:
        if stop_when is not None and stop_when(y):
            return y, steps, True
        g, H = barrier.grad_hess(y, mu, cost)
        # Levenberg fallback on factorization failure
        lam = 0.0
        base = np.abs(np.diag(H)).max() + 1.0
        for _ in range(12):
            try:
                L = np.linalg.cholesky(H + lam * eye)
                break
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-12 * base)
        else:  # pragma: no cover - barrier Hessians are PD
            return y, steps, False
        dy = np.linalg.solve(L.T, np.linalg.solve(L, -g))
        decrement = float(-g @ dy)
        if decrement <= 2.0 * tol:
            return y, steps, True
        if decrement < 0.5 * best_dec:
            best_dec = decrement
            no_progress = 0
        else:
            no_progress += 1
            if no_progress >= 4 and decrement < 1e-4:
                return y, steps, True  # numerical floor reached
        merit0 = barrier.value(y, mu, cost)
        t = 1.0
        while t > 1e-14:
            cand = y + t * dy
            mv = barrier.value(cand, mu, cost)
            if np.isfinite(mv) and mv <= merit0 - 0.25 * t * decrement:
                y = cand
                break
            t *= 0.5
        else:
            return y, steps + 1, True  # stalled: treat as converged at this mu
        steps += 1
    return y, steps, False


def solve(program: ConvexProgram, warm_start: np.ndarray | None = None,
          gap_tol: float = DEFAULT_GAP_TOL, max_newton: int = MAX_NEWTON_STEPS,
          mu0: float | None = None, mu_factor: float = 10.0,
          newton_tol: float = 1e-9) -> Solution:
    """Minimize the program objective with a log-barrier interior method.

    A strictly feasible start is taken from ``warm_start`` when possible;
    otherwise a phase-I slack minimization certifies feasibility first.
    The outer stage multiplier grows by ``mu_factor`` until
    barrier_weight / mu <= gap_tol.
    """
    m = program.barrier_weight()
    cost = program.objective * program.scales  # objective in scaled space
    barrier = _Barrier(program, slack=False)
    total_steps = 0
    phase1_slack = float("nan")

    y = None
    if warm_start is not None:
        cand = np.asarray(warm_start, dtype=float) / program.scales
        if barrier.strictly_feasible(cand, margin=0.0):
            y = cand
    if y is None:
        y, phase1_slack, steps, ok = _phase1(program, warm_start, max_newton)
        total_steps += steps
        if not ok:
            x = program.scales * y[:program.n]
            return Solution(x=x, objective=float(program.objective @ x),
                            status="infeasible", kkt_residual=float("nan"),
                            barrier_iters=total_steps, phase1_slack=phase1_slack)
        y = y[:program.n]

    mu = float(mu0) if mu0 is not None else (1e6 if warm_start is not None else 1.0)
    mu = max(mu, 1.0)
    status = "optimal"
    kkt = float("nan")
    stage_objs = []
    while True:
        final = m / mu <= gap_tol
        y, steps, converged = _newton_stage(barrier, y, mu, cost,
                                            newton_tol if final else 1e-4,
                                            max_newton - total_steps)
        total_steps += steps
        stage_objs.append(float(cost @ y))
        if not converged and total_steps >= max_newton:
            status = "max_iter"
            break
        if final:
            g, _ = barrier.grad_hess(y, mu, cost)
            kkt = float(np.abs(g).max() / mu / (1.0 + np.abs(cost).max()))
            break
        mu *= mu_factor
    x = program.scales * y
    return Solution(x=x, objective=float(program.objective @ x), status=status,
                    kkt_residual=kkt, barrier_iters=total_steps,
                    phase1_slack=phase1_slack, stage_objectives=stage_objs)


def _phase1(program: ConvexProgram, warm_start, max_newton):
    """Minimize a shared constraint slack; feasible when it goes below zero."""
    barrier = _Barrier(program, slack=True)
    n = program.n
    y0 = np.empty(n + 1)
    base = (np.asarray(warm_start, dtype=float) / program.scales
            if warm_start is not None else program.x0 / program.scales)
    lo, hi = barrier.lb, barrier.ub
    width = np.where(np.isfinite(hi - lo), hi - lo, 2.0)
    y0[:n] = np.clip(base, np.where(np.isfinite(lo), lo + 1e-6 * width, base),
                     np.where(np.isfinite(hi), hi - 1e-6 * width, base))
    vals = barrier.scalar_values(y0)
    eigs = barrier.lmi_min_eigs(y0)
    worst = max(vals.max() if vals.size else -1.0,
                (-eigs.min()) if eigs.size else -1.0)
    y0[n] = worst + 0.1 * max(1.0, abs(worst))

    cost = np.zeros(n + 1)
    cost[n] = 1.0
    mu = 1.0
    total = 0
    y = y0
    target = -1e-6
    m1 = program.barrier_weight()
    deep_enough = lambda yy: yy[n] <= target
    while total < max_newton:
        y, steps, _ = _newton_stage(barrier, y, mu, cost, 1e-9, max_newton - total,
                                    stop_when=deep_enough)
        total += steps
        if y[n] <= target:
            return y, float(y[n]), total, True
        if m1 / mu <= 1e-9:
            break
        mu *= 10.0
    slack = float(y[n])
    return y, slack, total, slack <= PHASE1_SLACK_TOL and slack < 0.0
