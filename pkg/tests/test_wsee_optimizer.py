import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdcellfree import wsee_optimizer as wo
from fdcellfree.allocation import baseline_alloc, init_allocation
from fdcellfree.config import SystemConfig
from fdcellfree.fronthaul import quantizer_for, select_aps
from fdcellfree.power_model import p_fix, wsee
from fdcellfree.scenario import make_drop
from fdcellfree.se_analysis import build_coefficients, se_lower_bounds


def _setup(cfg, seed):
    scn = make_drop(cfg, seed)
    smap = select_aps(scn, cfg)
    q = quantizer_for(cfg)
    coef = build_coefficients(scn, smap, q, cfg)
    return scn, smap, q, coef, p_fix(cfg, smap)


def _lam(f1n, f2n, f1, f2):
    a1, a2 = wo.taylor_underestimator(f1n, f2n)
    return a1 * f1 + a2 * f2


def test_taylor_tight_and_degenerate():
    assert _lam(1.7, 0.3, 1.7, 0.3) == pytest.approx(1.7 ** 2 / 0.3, rel=1e-15)
    assert wo.taylor_underestimator(0.0, 2.0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        wo.taylor_underestimator(1.0, 0.0)


def test_taylor_underestimates_random():
    rng = np.random.default_rng(0)
    f = rng.uniform(1e-3, 10, (10_000, 4))
    lam = np.array([_lam(*row) for row in f])
    assert np.all(lam <= f[:, 2] ** 2 / f[:, 3] * (1 + 1e-12))


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_taylor_property(f1n, f2n, f1, f2):
    assert _lam(f1n, f2n, f1, f2) <= f1 * f1 / f2 * (1 + 1e-12) + 1e-12


def test_init_slacks_strictly_feasible_without_qos():
    cfg = SystemConfig(qos_dl=0.0, qos_ul=0.0)
    scn, smap, q, coef, pf = _setup(cfg, 0)
    stt = wo.init_slacks(wo._shrink(init_allocation(scn, smap, q, cfg), cfg.eps_margin), coef, cfg, pf)
    viol = wo.subproblem_violation(stt, coef, cfg, pf, stt)
    assert all(v < 0 for fam, v in viol.items() if fam != "a_dl" and fam != "a_ul")
    assert viol["a_dl"] <= 0 and viol["a_ul"] <= 0  # rows read zeta >= 0
    rep = wsee(stt.alloc, scn, smap, q, cfg)
    B = cfg.power.bandwidth
    assert np.allclose(stt.f_dl * B, rep.ee_dl, rtol=1e-3)
    assert np.all(stt.f_dl * B < rep.ee_dl)


def test_qos_violation_detected_at_init():
    cfg = SystemConfig()
    scn, smap, q, coef, pf = _setup(cfg, 0)
    stt = wo.init_slacks(init_allocation(scn, smap, q, cfg), coef, cfg, pf)
    thr_d, thr_u = wo.qos_sinr(cfg)
    assert np.any(stt.zeta_ul < thr_u)  # EPA1 misses the UL target on this drop
    assert not wo._satisfies_qos(init_allocation(scn, smap, q, cfg), coef, cfg, cfg.eps_margin)


def test_constraint_audit():
    cfg = SystemConfig()
    scn, smap, q, coef, pf = _setup(cfg, 0)
    stt = wo.init_slacks(init_allocation(scn, smap, q, cfg), coef, cfg, pf)
    prog, vm = wo.build_subproblem(stt, coef, cfg, pf)
    K_d, K_u, M = 4, 4, 8
    served = int(smap.serve_dl.sum())
    assert wo.constraint_audit(prog) == {
        "a_dl": K_d, "a_ul": K_u, "b_dl": K_d, "b_ul": K_u, "c_dl": K_d, "c_ul": K_u,
        "d_dl": K_d, "e_ul": K_u, "f_dl": K_d, "g_ul": K_u, "h_ap": M,
        # u >= 0 per served pair, theta in [0, 1], f >= 0, lambda_dl >= 0
        "bounds": served + 2 * K_u + (K_d + K_u) + K_d,
    }


def test_zero_qos_rows():
    cfg = SystemConfig(qos_dl=0.0, qos_ul=0.0)
    scn, smap, q, coef, pf = _setup(cfg, 1)
    stt = wo.init_slacks(init_allocation(scn, smap, q, cfg), coef, cfg, pf)
    prog, vm = wo.build_subproblem(stt, coef, cfg, pf)
    rows = [c for c in prog.constraints if c.label.startswith("a_")]
    assert all(c.rhs == 0.0 and list(c.lin.values()) == [-1.0] for c in rows)


def test_optimize_desk_drop():
    cfg = SystemConfig()
    scn, smap, q, coef, pf = _setup(cfg, 1)
    res = wo.optimize(scn, smap, q, cfg)
    obj = [r.objective for r in res.trace]
    assert all(b >= a - 1e-5 for a, b in zip(obj, obj[1:]))
    assert res.converged and res.trace[-1].residue <= cfg.eps_sca
    se = se_lower_bounds(coef, res.alloc)
    assert np.all(se.se_dl >= cfg.qos_dl - 1e-6) and np.all(se.se_ul >= cfg.qos_ul - 1e-6)
    # accepted iterate feasible for the program it came from
    viol = wo.subproblem_violation(res.state, coef, cfg, pf, res.anchor)
    assert max(viol.values()) <= 1e-6
    for kind in ("EPA1", "EPA2", "RPA"):
        assert res.report.wsee >= wsee(baseline_alloc(kind, scn, smap, q, cfg, 0), scn, smap, q, cfg).wsee
    lines = res.trace_csv().splitlines()
    assert lines[0] == "iter,objective,residue,solver_status" and len(lines) == len(res.trace) + 1


def test_feasibility_chain():
    cfg = SystemConfig()
    scn, smap, q, coef, pf = _setup(cfg, 2)
    res = wo.optimize(scn, smap, q, cfg, multistart=False)
    # the final iterate, before any margin, is feasible for the next program built around it
    nxt = wo.subproblem_violation(res.state, coef, cfg, pf, res.state)
    assert max(v for fam, v in nxt.items() if fam not in ("lb",)) <= 1e-6


def test_unattainable_qos_raises():
    cfg = SystemConfig(qos_dl=5.0, qos_ul=5.0)
    scn, smap, q, coef, pf = _setup(cfg, 0)
    with pytest.raises(wo.QoSInfeasible):
        wo.optimize(scn, smap, q, cfg, multistart=False)


def test_trace_residue_history_matches():
    cfg = SystemConfig()
    scn, smap, q, coef, pf = _setup(cfg, 3)
    res = wo.optimize(scn, smap, q, cfg, multistart=False)
    accepted = [r.residue for r in res.trace[1:] if np.isfinite(r.residue)]
    assert np.allclose(accepted, res.state.residues)
