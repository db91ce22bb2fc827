"""Randomized solver self-test and moment-validation drivers."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .allocation import baseline_alloc
from .config import SystemConfig
from .convex_solver import AFFINE, OPTIMAL, ConvexProgram, solve
from .fronthaul import quantizer_for, select_aps
from .scenario import make_drop, make_rng
from .se_analysis import moment_suite


def random_program(rng, n: int | None = None, affine_only: bool = False) -> ConvexProgram:
    """Random bounded program of the taxonomy with a known strictly feasible point."""
    rng = make_rng(rng)
    n = int(rng.integers(2, 9)) if n is None else n
    x0 = rng.uniform(0.2, 2.0, n)
    p = ConvexProgram()
    for k in range(n):
        p.add_variable(f"x{k}", -5.0, 5.0)
    p.set_objective({k: float(rng.normal()) for k in range(n)})

    def sparse_lin(scale=1.0, nonneg=False):
        idx = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        vals = rng.uniform(0.1, 1.0, len(idx)) if nonneg else rng.normal(size=len(idx))
        return {int(i): float(scale * v) for i, v in zip(idx, vals)}

    for _ in range(int(rng.integers(1, n + 2))):
        a = sparse_lin()
        p.add_affine(a, sum(v * x0[k] for k, v in a.items()) + rng.uniform(0.05, 1.0))
    if affine_only:
        return p
    kinds = rng.integers(0, 3, size=int(rng.integers(1, 5)))
    for kind in kinds:
        if kind == 0:
            qd = {k: float(v) for k, v in sparse_lin(nonneg=True).items()}
            a = sparse_lin()
            val = sum(v * x0[k] ** 2 for k, v in qd.items()) + sum(v * x0[k] for k, v in a.items())
            p.add_quad_le_affine(qd, a, val + rng.uniform(0.05, 1.0))
        elif kind == 1:
            j, i = rng.choice(n, 2, replace=False)
            # need x0_j^2 < s log2(1 + x0_i)
            s = 1.5 * x0[j] ** 2 / math.log2(1.0 + x0[i]) + rng.uniform(0.05, 1.0)
            p.add_sq_le_log(int(j), int(i), float(s))
        else:
            j = int(rng.integers(n))
            a = sparse_lin(nonneg=True)
            lhs = sum(v * x0[k] for k, v in a.items())
            if lhs <= x0[j] ** 2:
                scale = 1.5 * x0[j] ** 2 / lhs
                a = {k: v * scale for k, v in a.items()}
            p.add_soc_num(j, a)
    return p


def vertex_enumeration_lp(p: ConvexProgram):
    """Brute-force LP optimum over all vertices (affine rows plus finite bounds)."""
    if any(c.kind != AFFINE for c in p.constraints):
        raise ValueError("vertex enumeration needs an all-affine program")
    n = p.n
    rows, rhs = [], []
    for c in p.constraints:
        a = np.zeros(n)
        for k, v in c.lin.items():
            a[k] += v
        rows.append(a)
        rhs.append(c.rhs)
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        if math.isfinite(p.lb[k]):
            rows.append(-e)
            rhs.append(-p.lb[k])
        if math.isfinite(p.ub[k]):
            rows.append(e)
            rhs.append(p.ub[k])
    A = np.array(rows)
    b = np.array(rhs)
    c = np.zeros(n)
    for k, v in p.objective.items():
        c[k] += v
    best, arg = -math.inf, None
    for sub in itertools.combinations(range(len(b)), n):
        As = A[list(sub)]
        if abs(np.linalg.det(As)) < 1e-12:
            continue
        x = np.linalg.solve(As, b[list(sub)])
        if np.all(A @ x <= b + 1e-9):
            val = float(c @ x)
            if val > best:
                best, arg = val, x
    return best, arg


@dataclass
class SolverCheck:
    index: int
    n: int
    affine_only: bool
    status: str
    kkt: float
    objective: float
    reference: float
    ok: bool


def solver_selftest(count: int = 100, seed=0, tol: float = 1e-6, affine_tol: float = 1e-8):
    ss = np.random.SeedSequence(seed).spawn(count)
    out = []
    for idx, s in enumerate(ss):
        rng = np.random.default_rng(s)
        aff = idx % 4 == 0
        n = int(rng.integers(2, 6)) if aff else None
        p = random_program(rng, n=n, affine_only=aff)
        res = solve(p, tol=tol)
        ok = res.status == OPTIMAL and res.kkt_residual <= tol
        ref = math.nan
        if aff:
            ref, _ = vertex_enumeration_lp(p)
            ok = ok and abs(res.objective - ref) <= affine_tol
        out.append(SolverCheck(idx, p.n, aff, res.status, res.kkt_residual, res.objective, ref, ok))
    return out


def random_small_case(rng, base: SystemConfig | None = None):
    """Small random scenario with a random fronthaul limit and random powers."""
    rng = make_rng(rng)
    base = SystemConfig() if base is None else base
    while True:
        M = int(rng.integers(1, 5))
        K_d = int(rng.integers(1, 5))
        K_u = int(rng.integers(1, 5))
        N = int(rng.integers(1, 3))
        nu = int(rng.integers(1, 5))
        kbar = int(rng.integers(1, 5))
        C = kbar * 4 * (base.tau_c - base.tau_t) * nu / base.T_c
        cfg = base.replace(**{"geometry.M": M, "geometry.K_d": K_d, "geometry.K_u": K_u},
                           N_t=N, N_r=N, nu=nu, C_fh=C,
                           p_d=10 ** (rng.uniform(-3, 0)), p_u=10 ** (rng.uniform(-3, 0)))
        scn = make_drop(cfg, int(rng.integers(2 ** 31)))
        try:
            smap = select_aps(scn, cfg)
        except RuntimeError:
            continue
        q = quantizer_for(cfg)
        alloc = baseline_alloc("RPA", scn, smap, q, cfg, int(rng.integers(2 ** 31)))
        return cfg, scn, smap, q, alloc


def moment_validation(cases: int = 20, trials: int = 100_000, seed=0, z_max: float = 3.0):
    """Closed-form vs Monte-Carlo moment checks on random small scenarios."""
    rng = np.random.default_rng(seed)
    records = []
    for case in range(cases):
        cfg, scn, smap, q, alloc = random_small_case(rng)
        for rec in moment_suite(scn, smap, q, alloc, cfg, trials, int(rng.integers(2 ** 31))):
            records.append((case, cfg, rec, rec.zscore <= z_max))
    return records
