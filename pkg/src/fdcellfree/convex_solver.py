"""Log-barrier interior-point solver for smooth convex programs.

Supported constraint kinds (all convex by construction):

* ``AFFINE``          a.x <= b
* ``QUAD_LE_AFFINE``  sum_i q_i x_i^2 + a.x <= b, with q >= 0
* ``SQ_LE_LOG``       x_j^2 <= s * log2(1 + x_i)
* ``SOC_NUM``         x_j^2 <= a.x, with a >= 0

The objective is linear and maximized. Box bounds are treated as affine rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

AFFINE = "AFFINE"
QUAD_LE_AFFINE = "QUAD_LE_AFFINE"
SQ_LE_LOG = "SQ_LE_LOG"
SOC_NUM = "SOC_NUM"
KINDS = (AFFINE, QUAD_LE_AFFINE, SQ_LE_LOG, SOC_NUM)

OPTIMAL = "Optimal"
MAXITER = "MaxIter"
INFEASIBLE = "Infeasible"

_LN2 = math.log(2.0)


@dataclass
class Constraint:
    kind: str
    lin: dict = field(default_factory=dict)
    rhs: float = 0.0
    quad: dict = field(default_factory=dict)
    j: int = -1
    i: int = -1
    scale: float = 1.0
    label: str = ""


class ConvexProgram:
    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.objective: dict[int, float] = {}
        self.constraints: list[Constraint] = []

    @property
    def n(self) -> int:
        return len(self.names)

    def add_variable(self, name: str, lb: float = -math.inf, ub: float = math.inf) -> int:
        if lb > ub:
            raise ValueError(f"empty box for {name}")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        return self.n - 1

    def set_objective(self, coeffs: dict):
        self._check_idx(coeffs)
        self.objective = {int(k): float(v) for k, v in coeffs.items()}

    def _check_idx(self, idx):
        for i in idx:
            if not (0 <= int(i) < self.n):
                raise IndexError(f"undeclared variable index {i}")

    def _add(self, con: Constraint) -> int:
        self.constraints.append(con)
        return len(self.constraints) - 1

    def add_affine(self, lin: dict, rhs: float, label: str = "") -> int:
        self._check_idx(lin)
        return self._add(Constraint(AFFINE, dict(lin), float(rhs), label=label))

    def add_quad_le_affine(self, quad: dict, lin: dict, rhs: float, label: str = "") -> int:
        self._check_idx(quad)
        self._check_idx(lin)
        if any(v < 0 for v in quad.values()):
            raise ValueError("quadratic coefficients must be nonnegative")
        return self._add(Constraint(QUAD_LE_AFFINE, dict(lin), float(rhs), quad=dict(quad), label=label))

    def add_sq_le_log(self, j: int, i: int, scale: float, label: str = "") -> int:
        self._check_idx([j, i])
        if scale <= 0:
            raise ValueError("log scale must be positive")
        return self._add(Constraint(SQ_LE_LOG, j=int(j), i=int(i), scale=float(scale), label=label))

    def add_soc_num(self, j: int, lin: dict, label: str = "") -> int:
        self._check_idx([j])
        self._check_idx(lin)
        if any(v < 0 for v in lin.values()):
            raise ValueError("SOC_NUM right-hand coefficients must be nonnegative")
        return self._add(Constraint(SOC_NUM, dict(lin), j=int(j), label=label))

    def objective_value(self, x) -> float:
        return float(sum(v * x[k] for k, v in self.objective.items()))

    def listing(self) -> str:
        """Human-readable dump, one constraint per line."""
        nm = self.names

        def lin(d):
            return " ".join(f"{v:+.6g}*{nm[k]}" for k, v in sorted(d.items())) or "0"

        out = ["maximize " + lin(self.objective)]
        for k, name in enumerate(nm):
            out.append(f"bound {self.lb[k]:.6g} <= {name} <= {self.ub[k]:.6g}")
        for c in self.constraints:
            tag = f"[{c.label}] " if c.label else ""
            if c.kind == AFFINE:
                out.append(f"{tag}{lin(c.lin)} <= {c.rhs:.6g}")
            elif c.kind == QUAD_LE_AFFINE:
                sq = " ".join(f"{v:+.6g}*{nm[k]}^2" for k, v in sorted(c.quad.items()))
                out.append(f"{tag}{sq} {lin(c.lin)} <= {c.rhs:.6g}")
            elif c.kind == SQ_LE_LOG:
                out.append(f"{tag}{nm[c.j]}^2 <= {c.scale:.6g}*log2(1+{nm[c.i]})")
            else:
                out.append(f"{tag}{nm[c.j]}^2 <= {lin(c.lin)}")
        return "\n".join(out) + "\n"

    def permuted(self, perm) -> "ConvexProgram":
        """Same program with variable ``k`` moved to position ``perm[k]``."""
        perm = list(perm)
        q = ConvexProgram()
        inv = np.argsort(perm)
        for new in range(self.n):
            old = int(inv[new])
            q.add_variable(self.names[old], self.lb[old], self.ub[old])
        mp = lambda d: {perm[k]: v for k, v in d.items()}
        q.set_objective(mp(self.objective))
        for c in self.constraints:
            q.constraints.append(Constraint(c.kind, mp(c.lin), c.rhs, mp(c.quad),
                                            perm[c.j] if c.j >= 0 else -1,
                                            perm[c.i] if c.i >= 0 else -1, c.scale, c.label))
        return q


@dataclass
class SolveResult:
    point: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    multipliers: np.ndarray
    newton_steps: int = 0
    message: str = ""


class _Compiled:
    """Dense vectorized view: rows ordered affine, quad, log, soc, lower, upper."""

    def __init__(self, p: ConvexProgram):
        n = p.n
        self.n = n
        self.c = np.zeros(n)
        for k, v in p.objective.items():
            self.c[k] += v
        by = {k: [c for c in p.constraints if c.kind == k] for k in KINDS}

        def dense(dicts):
            out = np.zeros((len(dicts), n))
            for r, d in enumerate(dicts):
                for k, v in d.items():
                    out[r, k] += v
            return out

        aff = by[AFFINE]
        self.A = dense([c.lin for c in aff])
        self.b = np.array([c.rhs for c in aff], float)
        qd = by[QUAD_LE_AFFINE]
        self.Q = dense([c.quad for c in qd])
        self.Aq = dense([c.lin for c in qd])
        self.bq = np.array([c.rhs for c in qd], float)
        lg = by[SQ_LE_LOG]
        self.lj = np.array([c.j for c in lg], int)
        self.li = np.array([c.i for c in lg], int)
        self.ls = np.array([c.scale for c in lg], float)
        sc = by[SOC_NUM]
        self.sj = np.array([c.j for c in sc], int)
        self.As = dense([c.lin for c in sc])
        lb = np.array(p.lb, float)
        ub = np.array(p.ub, float)
        self.lo_idx = np.flatnonzero(np.isfinite(lb))
        self.lo_val = lb[self.lo_idx]
        self.hi_idx = np.flatnonzero(np.isfinite(ub))
        self.hi_val = ub[self.hi_idx]
        self.sizes = [len(aff), len(qd), len(lg), len(sc), len(self.lo_idx), len(self.hi_idx)]
        self.m = sum(self.sizes)
        self.labels = ([c.label for k in KINDS for c in by[k]]
                       + [f"lb:{p.names[k]}" for k in self.lo_idx]
                       + [f"ub:{p.names[k]}" for k in self.hi_idx])

    def in_domain(self, x) -> bool:
        return bool(np.all(1.0 + x[self.li] > 0)) if len(self.li) else True

    def values(self, x) -> np.ndarray:
        parts = [self.A @ x - self.b,
                 self.Q @ (x * x) + self.Aq @ x - self.bq]
        if len(self.li):
            arg = 1.0 + x[self.li]
            with np.errstate(invalid="ignore", divide="ignore"):
                logv = np.where(arg > 0, np.log(np.where(arg > 0, arg, 1.0)) / _LN2, -np.inf)
            parts.append(x[self.lj] ** 2 - self.ls * logv)
        else:
            parts.append(np.zeros(0))
        parts.append(x[self.sj] ** 2 - self.As @ x)
        parts.append(self.lo_val - x[self.lo_idx])
        parts.append(x[self.hi_idx] - self.hi_val)
        return np.concatenate(parts)

    def jacobian(self, x) -> np.ndarray:
        n = self.n
        Jq = 2.0 * self.Q * x[None, :] + self.Aq
        Jl = np.zeros((len(self.lj), n))
        if len(self.lj):
            r = np.arange(len(self.lj))
            np.add.at(Jl, (r, self.lj), 2.0 * x[self.lj])
            np.add.at(Jl, (r, self.li), -self.ls / (_LN2 * (1.0 + x[self.li])))
        Js = -self.As.copy()
        if len(self.sj):
            np.add.at(Js, (np.arange(len(self.sj)), self.sj), 2.0 * x[self.sj])
        Jlo = np.zeros((len(self.lo_idx), n))
        Jlo[np.arange(len(self.lo_idx)), self.lo_idx] = -1.0
        Jhi = np.zeros((len(self.hi_idx), n))
        Jhi[np.arange(len(self.hi_idx)), self.hi_idx] = 1.0
        return np.vstack([self.A, Jq, Jl, Js, Jlo, Jhi])

    def hess_diag(self, x, w) -> np.ndarray:
        """sum_r w_r * diag(Hessian of row r); all row Hessians are diagonal."""
        na, nq, nl, ns = self.sizes[:4]
        o = na
        h = 2.0 * (w[o:o + nq] @ self.Q)
        o += nq
        if nl:
            wl = w[o:o + nl]
            np.add.at(h, self.lj, 2.0 * wl)
            np.add.at(h, self.li, wl * self.ls / (_LN2 * (1.0 + x[self.li]) ** 2))
        o += nl
        if ns:
            np.add.at(h, self.sj, 2.0 * w[o:o + ns])
        return h


class _PhaseOne:
    """min s  s.t.  g(x) <= s,  s >= -1   (maximize -s)."""

    def __init__(self, base: _Compiled):
        self.base = base
        self.n = base.n + 1
        self.m = base.m + 1
        self.c = np.zeros(self.n)
        self.c[-1] = -1.0

    def in_domain(self, z) -> bool:
        return self.base.in_domain(z[:-1])

    def values(self, z):
        g = self.base.values(z[:-1]) - z[-1]
        return np.append(g, -1.0 - z[-1])

    def jacobian(self, z):
        J = self.base.jacobian(z[:-1])
        J = np.hstack([J, -np.ones((J.shape[0], 1))])
        last = np.zeros((1, self.n))
        last[0, -1] = -1.0
        return np.vstack([J, last])

    def hess_diag(self, z, w):
        return np.append(self.base.hess_diag(z[:-1], w[:-1]), 0.0)


def _solve_newton(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / d[:, None] / d[None, :]
    rs = rhs / d
    try:
        step = cho_solve(cho_factor(Hs, check_finite=False), rs, check_finite=False)
    except (LinAlgError, ValueError):
        step = np.linalg.lstsq(Hs + 1e-12 * np.eye(len(rs)), rs, rcond=None)[0]
    return step / d


def _barrier(prob, x, t):
    if not prob.in_domain(x):
        return math.inf, None
    g = prob.values(x)
    if np.any(~(g < 0)):
        return math.inf, g
    return -t * float(prob.c @ x) - float(np.sum(np.log(-g))), g


def _center(prob, x, t, stat_tol, max_steps):
    """Damped Newton on the barrier; returns (x, steps, ok)."""
    F, g = _barrier(prob, x, t)
    steps = 0
    for steps in range(1, max_steps + 1):
        inv = 1.0 / (-g)
        J = prob.jacobian(x)
        grad = -t * prob.c + J.T @ inv
        if np.max(np.abs(grad)) / t <= stat_tol:
            return x, steps, True
        H = (J.T * (inv * inv)) @ J + np.diag(prob.hess_diag(x, inv))
        dx = _solve_newton(H, -grad)
        slope = float(grad @ dx)
        if not np.all(np.isfinite(dx)) or slope >= 0:
            return x, steps, False
        if -slope / 2.0 <= 1e-20 * max(1.0, abs(F)):
            return x, steps, True
        alpha = 1.0
        while alpha > 1e-16:
            xn = x + alpha * dx
            Fn, gn = _barrier(prob, xn, t)
            if Fn <= F + 0.25 * alpha * slope + 1e-13 * abs(F):
                break
            alpha *= 0.5
        else:
            return x, steps, False
        if np.array_equal(xn, x):
            return x, steps, True
        x, F, g = xn, Fn, gn
    return x, steps, False


def _barrier_solve(prob, x, tol, gap_tol, t0=1.0, max_outer=40, max_newton=200, stop=None):
    t = t0
    total = 0
    ok = True
    for _ in range(max_outer):
        x, steps, ok = _center(prob, x, t, 0.01 * tol, max_newton)
        total += steps
        if stop is not None and stop(x):
            return x, t, total, True
        if prob.m / t <= gap_tol and ok:
            return x, t, total, True
        t *= 10.0
    return x, t, total, False


def _residual(prob, x, lam) -> float:
    g = prob.values(x)
    J = prob.jacobian(x)
    stat = np.max(np.abs(prob.c - J.T @ lam)) if prob.n else 0.0
    parts = [stat,
             np.max(np.abs(lam * g)) if len(g) else 0.0,
             np.max(np.maximum(g, 0.0)) if len(g) else 0.0,
             np.max(np.maximum(-lam, 0.0)) if len(lam) else 0.0]
    return float(max(parts))


def kkt_residual(p: ConvexProgram, point, multipliers) -> float:
    """Worst of stationarity, complementarity, primal and dual infeasibility."""
    prob = _Compiled(p)
    x = np.asarray(point, float)
    if not prob.in_domain(x):
        return math.inf
    return _residual(prob, x, np.asarray(multipliers, float))


def _default_start(p: ConvexProgram) -> np.ndarray:
    x = np.zeros(p.n)
    for k in range(p.n):
        lo, hi = p.lb[k], p.ub[k]
        if math.isfinite(lo) and math.isfinite(hi):
            x[k] = 0.5 * (lo + hi)
        elif math.isfinite(lo):
            x[k] = lo + 1.0
        elif math.isfinite(hi):
            x[k] = hi - 1.0
    return x


def _polish(prob, x, lam, feas_tol, iters=25):
    """Newton on the KKT system of the constraints the barrier left active."""
    g = prob.values(x)
    act = np.flatnonzero(lam > -g)
    if len(act) == 0:
        return None
    n = prob.n
    mu = lam[act].copy()
    w = np.zeros(prob.m)
    for _ in range(iters):
        w[:] = 0.0
        w[act] = mu
        J = prob.jacobian(x)[act]
        gv = prob.values(x)[act]
        F = np.concatenate([J.T @ mu - prob.c, gv])
        if np.max(np.abs(F)) <= 1e-15 * max(1.0, np.max(np.abs(prob.c))):
            break
        K = np.zeros((n + len(act), n + len(act)))
        K[:n, :n] = np.diag(prob.hess_diag(x, w))
        K[:n, n:] = J.T
        K[n:, :n] = J
        step = np.linalg.lstsq(K, -F, rcond=None)[0]
        x = x + step[:n]
        mu = mu + step[n:]
        if not prob.in_domain(x):
            return None
    if np.any(mu < -1e-12):
        return None
    full = np.zeros(prob.m)
    full[act] = np.maximum(mu, 0.0)
    g = prob.values(x)
    if np.any(g > feas_tol):
        return None
    return x, full


def solve(p: ConvexProgram, start=None, tol: float = 1e-6, feas_tol: float = 1e-8,
          gap_tol: float | None = None, polish: bool = True) -> SolveResult:
    """Maximize the program's objective from ``start`` (phase I if needed).

    ``polish`` refines the barrier answer by Newton on the active KKT system;
    keep it off when the caller needs a strictly interior point back.
    """
    prob = _Compiled(p)
    x = _default_start(p) if start is None else np.array(start, float)
    if x.shape != (p.n,):
        raise ValueError("start point has the wrong length")
    gap_tol = 0.1 * tol if gap_tol is None else gap_tol
    steps = 0

    g = prob.values(x) if prob.in_domain(x) else None
    if g is None or np.any(~(g < 0)):
        # phase I: find a strictly feasible point
        if not prob.in_domain(x):
            x[prob.li] = np.maximum(x[prob.li], 0.0)
        g = prob.values(x)
        ph = _PhaseOne(prob)
        z = np.append(x, float(np.max(g)) + 1.0)
        z, _, s1, _ = _barrier_solve(ph, z, tol, 1e-12, stop=lambda zz: zz[-1] < -1e-9)
        steps += s1
        x = z[:-1]
        g = prob.values(x)
        if not np.all(g < 0):
            lam = np.zeros(prob.m)
            return SolveResult(x, p.objective_value(x), INFEASIBLE, math.inf, lam, steps,
                               "phase I found no strictly feasible point")

    x, t, s2, ok = _barrier_solve(prob, x, tol, gap_tol)
    steps += s2
    g = prob.values(x)
    lam = 1.0 / (t * (-g))
    res = _residual(prob, x, lam)
    if polish:
        out = _polish(prob, x.copy(), lam, feas_tol)
        if out is not None:
            res_p = _residual(prob, *out)
            if res_p <= res:
                x, lam = out
                res = res_p
                g = prob.values(x)
    feasible = bool(np.all(g <= feas_tol))
    status = OPTIMAL if (ok and res <= tol and feasible) else MAXITER
    return SolveResult(x, p.objective_value(x), status, res, lam, steps,
                       "" if status == OPTIMAL else f"stopped with residual {res:.3g}")
