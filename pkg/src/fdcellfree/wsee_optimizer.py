"""WSEE maximization by successive convex approximation.

Program units: DL coefficients are normalized, u_mk = c_mk * sqrt(b N_t gamma_mk),
so the per-AP budget reads sum_k u_mk^2 <= 1. UL interference rows are
divided by F_l, with lambda'_l = lambda_l / sqrt(F_l). States are stored in
physical units and converted at the program boundary.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .allocation import PowerAllocation, baseline_alloc, init_allocation
from .config import SystemConfig
from .convex_solver import INFEASIBLE, OPTIMAL, ConvexProgram, solve
from .fronthaul import QuantizerParams, ServiceMap
from .power_model import WSEEReport, p_fix, wsee
from .scenario import Scenario
from .se_analysis import SECoefficients, build_coefficients, sinr_dl, sinr_ul

SOLVER_TOL = 1e-6


class QoSInfeasible(RuntimeError):
    pass


def taylor_underestimator(f1_n: float, f2_n: float):
    """Affine under-estimator of f1^2/f2 around (f1_n, f2_n).

    Returns (a1, a2) with Lambda(f1, f2) = a1*f1 + a2*f2.
    """
    if not f2_n > 0:
        raise ValueError("expansion point needs f2_n > 0")
    r = f1_n / f2_n
    return 2.0 * r, -r * r


def qos_sinr(cfg: SystemConfig):
    """Minimum SINRs (DL, UL) equivalent to the per-UE SE targets."""
    tf = cfg.tau_f
    return 2.0 ** (cfg.qos_dl / tf) - 1.0, 2.0 ** (cfg.qos_ul / tf) - 1.0


@dataclass
class SCAState:
    alloc: PowerAllocation
    f_dl: np.ndarray
    f_ul: np.ndarray
    psi_dl: np.ndarray
    psi_ul: np.ndarray
    zeta_dl: np.ndarray
    zeta_ul: np.ndarray
    lam_dl: np.ndarray
    lam_ul: np.ndarray
    n: int = 0
    residues: list = field(default_factory=list)


@dataclass
class TraceRow:
    iter: int
    objective: float  # sum_phi w_phi f_phi  (bits/J/Hz)
    wsee: float  # bits/J at the iterate's allocation
    residue: float
    solver_status: str


@dataclass
class OptimizeResult:
    alloc: PowerAllocation
    report: WSEEReport
    trace: list
    converged: bool
    flag: str = ""
    feasibility_rounds: int = 0
    start: str = "EPA1"
    state: SCAState | None = None  # final iterate with its slacks
    anchor: SCAState | None = None  # expansion point of the last accepted program

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "objective", "residue", "solver_status"])
        for r in self.trace:
            w.writerow([r.iter, repr(r.objective), repr(r.residue), r.solver_status])
        return buf.getvalue()


def _norm_scale(coef: SECoefficients) -> np.ndarray:
    """s_mk with c = s * u; zero where the pair is not served."""
    g = coef.gamma_dl * coef.serve_dl
    with np.errstate(divide="ignore"):
        return np.where(g > 0, 1.0 / np.sqrt(np.where(g > 0, coef.b_tilde * coef.N_t * g, 1.0)), 0.0)


def _served_pairs(coef: SECoefficients):
    return [tuple(p) for p in np.argwhere(coef.serve_dl & (coef.gamma_dl > 0))]


class _VarMap:
    def __init__(self, prog: ConvexProgram, coef: SECoefficients, feasibility: bool = False):
        K_d, K_u = coef.A_dl.shape[1], coef.A_ul.shape[0]
        self.pairs = _served_pairs(coef)
        self.u = {pr: prog.add_variable(f"u[{pr[0]},{pr[1]}]", 0.0) for pr in self.pairs}
        self.theta = [prog.add_variable(f"theta[{l}]", 0.0, 1.0) for l in range(K_u)]
        self.feas = feasibility
        if not feasibility:
            self.f_dl = [prog.add_variable(f"f_dl[{k}]", 0.0) for k in range(K_d)]
            self.f_ul = [prog.add_variable(f"f_ul[{l}]", 0.0) for l in range(K_u)]
            self.psi_dl = [prog.add_variable(f"psi_dl[{k}]") for k in range(K_d)]
            self.psi_ul = [prog.add_variable(f"psi_ul[{l}]") for l in range(K_u)]
        self.z_dl = [prog.add_variable(f"zeta_dl[{k}]") for k in range(K_d)]
        self.z_ul = [prog.add_variable(f"zeta_ul[{l}]") for l in range(K_u)]
        self.l_dl = [prog.add_variable(f"lam_dl[{k}]", 0.0) for k in range(K_d)]
        self.l_ul = [prog.add_variable(f"lam_ul[{l}]") for l in range(K_u)]
        self.s = prog.add_variable("s", -math.inf, 1.0) if feasibility else None
        self.n = prog.n
        self.scale = _norm_scale(coef)
        self.sqF = np.sqrt(np.where(coef.F_ul > 0, coef.F_ul, 1.0))

    def pack(self, st: SCAState, s: float | None = None) -> np.ndarray:
        x = np.zeros(self.n)
        for pr, j in self.u.items():
            x[j] = st.alloc.c[pr] / self.scale[pr]
        x[self.theta] = st.alloc.theta
        if not self.feas:
            x[self.f_dl] = st.f_dl
            x[self.f_ul] = st.f_ul
            x[self.psi_dl] = st.psi_dl
            x[self.psi_ul] = st.psi_ul
        x[self.z_dl] = st.zeta_dl
        x[self.z_ul] = st.zeta_ul
        x[self.l_dl] = st.lam_dl
        x[self.l_ul] = st.lam_ul / self.sqF
        if self.s is not None:
            x[self.s] = s
        return x

    def unpack(self, x, like: SCAState) -> SCAState:
        c = np.zeros_like(like.alloc.c)
        for pr, j in self.u.items():
            c[pr] = max(x[j], 0.0) * self.scale[pr]
        theta = np.clip(x[self.theta], 0.0, 1.0)
        st = replace(like, alloc=PowerAllocation(c, theta),
                     zeta_dl=x[self.z_dl].copy(), zeta_ul=x[self.z_ul].copy(),
                     lam_dl=x[self.l_dl].copy(), lam_ul=x[self.l_ul] * self.sqF,
                     residues=list(like.residues))
        if not self.feas:
            st.f_dl = x[self.f_dl].copy()
            st.f_ul = x[self.f_ul].copy()
            st.psi_dl = x[self.psi_dl].copy()
            st.psi_ul = x[self.psi_ul].copy()
        return st

    def normalized(self, alloc: PowerAllocation) -> np.ndarray:
        u = np.array([alloc.c[pr] / self.scale[pr] for pr in self.pairs])
        return np.concatenate([u, alloc.theta])


def _radiated_dl(coef: SECoefficients, cfg: SystemConfig) -> float:
    """W per unit u^2: N_t p_d gamma s^2 / alpha = p_d / (b alpha)."""
    return cfg.p_d / (coef.b_tilde * cfg.power.alpha_ap)


def init_slacks(alloc: PowerAllocation, coef: SECoefficients, cfg: SystemConfig, pfix: float,
                margin: float | None = None) -> SCAState:
    """Slacks at equality for ``alloc``, then pulled strictly inside."""
    eps = cfg.eps_margin if margin is None else margin
    c = alloc.c * coef.serve_dl
    th = alloc.theta
    tf = coef.tau_f
    sd = sinr_dl(coef, alloc)
    su = sinr_ul(coef, alloc)
    lam_dl = (1.0 - eps / 4) * np.sum(coef.A_dl * c, axis=0)
    lam_ul = (1.0 - eps / 4) * np.sqrt(coef.A_ul * th)
    zeta_dl = (1.0 - eps) * sd
    zeta_ul = (1.0 - eps) * su
    psi_dl = (1.0 - eps) * np.sqrt(tf * np.log2(1.0 + zeta_dl))
    psi_ul = (1.0 - eps) * np.sqrt(tf * np.log2(1.0 + zeta_ul))
    pm = cfg.power
    p_dl = pfix + cfg.N_t * cfg.p_d * np.sum(coef.gamma_dl * c ** 2, axis=0) / pm.alpha_ap + pm.P_tc_dl
    p_ul = pfix + cfg.p_u * th / pm.alpha_ue + pm.P_tc_ul
    f_dl = (1.0 - eps) * psi_dl ** 2 / p_dl
    f_ul = (1.0 - eps) * psi_ul ** 2 / p_ul
    return SCAState(alloc, f_dl, f_ul, psi_dl, psi_ul, zeta_dl, zeta_ul, lam_dl, lam_ul)


def _add_sinr_rows(prog, vm: _VarMap, st: SCAState, coef: SECoefficients, cfg):
    K_d, K_u = len(vm.z_dl), len(vm.z_ul)
    sc = vm.scale
    # (c) DL numerator root, linear in u
    for k in range(K_d):
        lin = {vm.u[pr]: -coef.A_dl[pr] * sc[pr] for pr in vm.pairs if pr[1] == k}
        lin[vm.l_dl[k]] = 1.0
        prog.add_affine(lin, 0.0, label=f"c_dl[{k}]")
    # (c) UL numerator root, rotated cone
    for l in range(K_u):
        prog.add_soc_num(vm.l_ul[l], {vm.theta[l]: coef.A_ul[l] / vm.sqF[l] ** 2}, label=f"c_ul[{l}]")
    # (d) DL interference plus noise below the linearized lambda^2/zeta
    for k in range(K_d):
        a1, a2 = taylor_underestimator(st.lam_dl[k], st.zeta_dl[k])
        quad = {vm.u[pr]: coef.B_dl[k][pr] * sc[pr] ** 2 for pr in vm.pairs}
        lin = {vm.theta[l]: coef.D_dl[k, l] for l in range(K_u)}
        lin[vm.l_dl[k]] = -a1
        lin[vm.z_dl[k]] = -a2
        prog.add_quad_le_affine(quad, lin, -1.0, label=f"d_dl[{k}]")
    # (e) UL, divided by F_l
    for l in range(K_u):
        F = vm.sqF[l] ** 2
        a1, a2 = taylor_underestimator(st.lam_ul[l] / vm.sqF[l], st.zeta_ul[l])
        quad = {vm.u[pr]: coef.D_ul[l][pr] * sc[pr] ** 2 / F for pr in vm.pairs}
        lin = {vm.theta[q]: coef.B_ul[l, q] / F for q in range(K_u)}
        lin[vm.theta[l]] += coef.E_ul[l] / F
        lin[vm.l_ul[l]] = -a1
        lin[vm.z_ul[l]] = -a2
        prog.add_quad_le_affine(quad, lin, -coef.F_ul[l] / F, label=f"e_ul[{l}]")
    # (h) per-AP budget
    M = coef.A_dl.shape[0]
    for m in range(M):
        quad = {vm.u[pr]: 1.0 for pr in vm.pairs if pr[0] == m}
        if quad:
            prog.add_quad_le_affine(quad, {}, 1.0, label=f"h_ap[{m}]")


def build_subproblem(state: SCAState, coef: SECoefficients, cfg: SystemConfig, pfix: float):
    """Convex program of one SCA round around ``state``; returns (program, varmap)."""
    prog = ConvexProgram()
    vm = _VarMap(prog, coef)
    K_d, K_u = len(vm.z_dl), len(vm.z_ul)
    thr_d, thr_u = qos_sinr(cfg)
    w_dl, w_ul = cfg.weights()
    obj = {vm.f_dl[k]: w_dl[k] for k in range(K_d)}
    obj.update({vm.f_ul[l]: w_ul[l] for l in range(K_u)})
    prog.set_objective(obj)
    tf = coef.tau_f
    # (a) QoS as SINR floors
    for k in range(K_d):
        prog.add_affine({vm.z_dl[k]: -1.0}, -thr_d, label=f"a_dl[{k}]")
    for l in range(K_u):
        prog.add_affine({vm.z_ul[l]: -1.0}, -thr_u, label=f"a_ul[{l}]")
    # (b) sqrt-SE below the achievable rate
    for k in range(K_d):
        prog.add_sq_le_log(vm.psi_dl[k], vm.z_dl[k], tf, label=f"b_dl[{k}]")
    for l in range(K_u):
        prog.add_sq_le_log(vm.psi_ul[l], vm.z_ul[l], tf, label=f"b_ul[{l}]")
    _add_sinr_rows(prog, vm, state, coef, cfg)
    # (f, g) consumed power below the linearized psi^2/f
    pm = cfg.power
    rad = _radiated_dl(coef, cfg)
    for k in range(K_d):
        a1, a2 = taylor_underestimator(state.psi_dl[k], state.f_dl[k])
        quad = {vm.u[pr]: rad for pr in vm.pairs if pr[1] == k}
        prog.add_quad_le_affine(quad, {vm.psi_dl[k]: -a1, vm.f_dl[k]: -a2},
                                -(pfix + pm.P_tc_dl), label=f"f_dl[{k}]")
    for l in range(K_u):
        a1, a2 = taylor_underestimator(state.psi_ul[l], state.f_ul[l])
        prog.add_affine({vm.theta[l]: cfg.p_u / pm.alpha_ue, vm.psi_ul[l]: -a1, vm.f_ul[l]: -a2},
                        -(pfix + pm.P_tc_ul), label=f"g_ul[{l}]")
    return prog, vm


def constraint_audit(prog: ConvexProgram) -> dict:
    """Row counts per constraint family (labels' prefixes) plus finite bounds."""
    out = {}
    for c in prog.constraints:
        fam = c.label.split("[")[0]
        out[fam] = out.get(fam, 0) + 1
    out["bounds"] = sum(math.isfinite(v) for v in prog.lb) + sum(math.isfinite(v) for v in prog.ub)
    return out


def _feasibility_program(state: SCAState, coef, cfg):
    prog = ConvexProgram()
    vm = _VarMap(prog, coef, feasibility=True)
    thr_d, thr_u = qos_sinr(cfg)
    prog.set_objective({vm.s: 1.0})
    # zeta >= thr (1 + s): relative SINR margin, common to all UEs
    for k in range(len(vm.z_dl)):
        prog.add_affine({vm.z_dl[k]: -1.0, vm.s: thr_d}, -thr_d, label=f"a_dl[{k}]")
    for l in range(len(vm.z_ul)):
        prog.add_affine({vm.z_ul[l]: -1.0, vm.s: thr_u}, -thr_u, label=f"a_ul[{l}]")
    _add_sinr_rows(prog, vm, state, coef, cfg)
    return prog, vm


def _min_margin(state: SCAState, cfg) -> float:
    thr_d, thr_u = qos_sinr(cfg)
    vals = []
    if thr_d > 0:
        vals += list(state.zeta_dl / thr_d - 1.0)
    if thr_u > 0:
        vals += list(state.zeta_ul / thr_u - 1.0)
    return min(vals) if vals else math.inf


def _shrink(alloc: PowerAllocation, eps: float) -> PowerAllocation:
    return PowerAllocation(alloc.c * (1.0 - eps), alloc.theta * (1.0 - eps))


def feasibility_phase(alloc: PowerAllocation, coef, cfg, pfix, target: float = 0.01, max_rounds: int = 100):
    """SCA on max_s s.t. SINR >= (1+s) * threshold; returns a QoS-feasible allocation."""
    st = init_slacks(alloc, coef, cfg, pfix)
    s = _min_margin(st, cfg) - 1e-3
    for rnd in range(1, max_rounds + 1):
        prog, vm = _feasibility_program(st, coef, cfg)
        res = solve(prog, vm.pack(st, s), tol=SOLVER_TOL, polish=False)
        if res.status == INFEASIBLE:
            break
        new = vm.unpack(res.point, st)
        s_new = float(res.point[vm.s])
        step = np.linalg.norm(vm.normalized(new.alloc) - vm.normalized(st.alloc))
        st, s = new, s_new
        if s >= target:
            return st.alloc, rnd
        if step <= 1e-6:
            break
    raise QoSInfeasible(f"QoS targets unattainable (best relative SINR margin {s:.4g})")


def _satisfies_qos(alloc, coef, cfg, eps) -> bool:
    thr_d, thr_u = qos_sinr(cfg)
    return bool(np.all((1 - eps) * sinr_dl(coef, alloc) > thr_d) and np.all((1 - eps) * sinr_ul(coef, alloc) > thr_u))


def _sca_from(alloc, scn, smap, q, cfg, coef, pfix, eps_sca, max_iter) -> OptimizeResult:
    """Algorithm-2 loop from one starting allocation."""
    eps = cfg.eps_margin
    alloc = _shrink(alloc, eps)
    feas_rounds = 0
    if not _satisfies_qos(alloc, coef, cfg, eps):
        alloc, feas_rounds = feasibility_phase(alloc, coef, cfg, pfix)
        alloc = _shrink(alloc, eps)
    st = init_slacks(alloc, coef, cfg, pfix)
    w_dl, w_ul = cfg.weights()
    obj = float(w_dl @ st.f_dl + w_ul @ st.f_ul)
    trace = [TraceRow(0, obj, wsee(st.alloc, scn, smap, q, cfg, coef).wsee, math.nan, "init")]
    converged = False
    flag = ""
    anchor = st
    for it in range(1, max_iter + 1):
        prog, vm = build_subproblem(st, coef, cfg, pfix)
        res = solve(prog, vm.pack(st), tol=SOLVER_TOL, polish=False)
        if res.status == INFEASIBLE or not np.all(np.isfinite(res.point)) or res.objective < obj - 1e-9:
            flag = f"solver {res.status} at round {it}; kept previous iterate"
            trace.append(TraceRow(it, obj, trace[-1].wsee, math.nan, res.status))
            break
        new = vm.unpack(res.point, st)
        r = float(np.linalg.norm(vm.normalized(new.alloc) - vm.normalized(st.alloc)))
        new.n = it
        new.residues.append(r)
        anchor, st = st, new
        obj = res.objective
        trace.append(TraceRow(it, obj, wsee(st.alloc, scn, smap, q, cfg, coef).wsee, r, res.status))
        if res.status != OPTIMAL and not flag:
            flag = f"solver {res.status} at round {it}"
        if r <= eps_sca:
            converged = True
            break
    if not converged and not flag:
        flag = f"no convergence in {max_iter} rounds"
    report = wsee(st.alloc, scn, smap, q, cfg, coef)
    return OptimizeResult(st.alloc, report, trace, converged, flag, feas_rounds, state=st, anchor=anchor)


def starting_points(scn, smap, q, cfg, throttle: float = 0.01):
    """EPA1 first, then EPA1 with the DL, resp. the UL, throttled to ``throttle`` power."""
    base = init_allocation(scn, smap, q, cfg)
    return [("EPA1", base),
            ("DL-low", PowerAllocation(base.c * math.sqrt(throttle), base.theta.copy())),
            ("UL-low", PowerAllocation(base.c.copy(), base.theta * throttle))]


def optimize(scn: Scenario, smap: ServiceMap, q: QuantizerParams, cfg: SystemConfig,
             eps_sca: float | None = None, max_iter: int | None = None,
             multistart: bool = True) -> OptimizeResult:
    """SCA WSEE maximization; with ``multistart`` the best of several starts is kept.

    Raises QoSInfeasible when no start can be brought to the QoS targets.
    """
    eps_sca = cfg.eps_sca if eps_sca is None else eps_sca
    max_iter = cfg.sca_max_iter if max_iter is None else max_iter
    coef = build_coefficients(scn, smap, q, cfg)
    pfix = p_fix(cfg, smap)
    starts = starting_points(scn, smap, q, cfg)
    if not multistart:
        starts = starts[:1]
    best, err = None, None
    for name, alloc in starts:
        try:
            res = _sca_from(alloc, scn, smap, q, cfg, coef, pfix, eps_sca, max_iter)
        except QoSInfeasible as exc:
            err = exc
            continue
        res.start = name
        if best is None or res.report.wsee > best.report.wsee:
            best = res
    if best is None:
        raise err
    return best


def subproblem_violation(state: SCAState, coef: SECoefficients, cfg: SystemConfig, pfix: float,
                         anchor: SCAState) -> dict:
    """Worst violation of each constraint family at ``state`` for the program built around ``anchor``."""
    prog, vm = build_subproblem(anchor, coef, cfg, pfix)
    from .convex_solver import _Compiled
    comp = _Compiled(prog)
    g = comp.values(vm.pack(state))
    out = {}
    for lab, v in zip(comp.labels, g):
        fam = lab.split("[")[0].split(":")[0]
        out[fam] = max(out.get(fam, -math.inf), float(v))
    return out


def run_allocators(scn, smap, q, cfg, seed, kinds=("OPA", "EPA1", "EPA2", "RPA")):
    """WSEE reports for several allocators on one drop; OPA failures raise."""
    out = {}
    for kind in kinds:
        if kind == "OPA":
            out[kind] = optimize(scn, smap, q, cfg)
        else:
            alloc = baseline_alloc(kind, scn, smap, q, cfg, seed)
            out[kind] = wsee(alloc, scn, smap, q, cfg)
    return out
