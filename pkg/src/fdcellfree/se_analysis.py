"""Closed-form SE lower bounds, Monte-Carlo upper bound and moment oracle."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .allocation import PowerAllocation, check_feasible
from .channel import cn, draw_channels
from .config import SystemConfig
from .fronthaul import QuantizerParams, ServiceMap
from .scenario import Scenario, make_rng

DL_TERMS = ("DS", "BU", "MUI", "UDI", "TQD", "N")
UL_TERMS = ("DS", "BU", "MUI", "RI", "TQD", "N")


@dataclass(frozen=True)
class SECoefficients:
    tau_f: float
    A_dl: np.ndarray  # (M, K_d)
    B_dl: np.ndarray  # (K_d, M, K_d)  [k, m, q]
    D_dl: np.ndarray  # (K_d, K_u)
    A_ul: np.ndarray  # (K_u,)
    B_ul: np.ndarray  # (K_u, K_u)
    D_ul: np.ndarray  # (K_u, M, K_d)  [l, i, k]
    E_ul: np.ndarray
    F_ul: np.ndarray
    serve_dl: np.ndarray
    serve_ul: np.ndarray
    gamma_dl: np.ndarray  # kept for the per-AP power check
    b_tilde: float
    N_t: int


@dataclass(frozen=True)
class SEReport:
    se_dl: np.ndarray
    se_ul: np.ndarray

    @property
    def sum_se(self) -> float:
        return float(np.sum(self.se_dl) + np.sum(self.se_ul))


@dataclass(frozen=True)
class MCReport(SEReport):
    stderr_dl: np.ndarray = field(default=None)
    stderr_ul: np.ndarray = field(default=None)
    sum_stderr: float = 0.0
    trials: int = 0


def build_coefficients(scn: Scenario, smap: ServiceMap, q: QuantizerParams, cfg: SystemConfig) -> SECoefficients:
    M, K_d, K_u = scn.M, scn.K_d, scn.K_u
    if smap.serve_dl.shape != (M, K_d) or smap.serve_ul.shape != (M, K_u):
        raise ValueError("service map does not match scenario dimensions")
    a, b = q.a_tilde, q.b_tilde
    Nt, Nr = cfg.N_t, cfg.N_r
    rd, ru = cfg.rho_d, cfg.rho_u
    gd, gu = scn.gamma_dl, scn.gamma_ul
    Su = smap.serve_ul.astype(float)
    gu_s = gu * Su  # only serving APs contribute to UL sums

    A_dl = a * Nt * np.sqrt(rd) * gd
    B_dl = b * Nt * rd * np.einsum("mk,mq->kmq", scn.beta_dl, gd)
    D_dl = ru * scn.beta_udi
    A_ul = a ** 2 * Nr ** 2 * ru * gu_s.sum(axis=0) ** 2
    B_ul = b * Nr * ru * gu_s.T @ scn.beta_ul
    ri = gu_s.T @ scn.beta_ri  # (K_u, M): sum_m gamma_ml beta_ri[m, i]
    D_ul = b ** 2 * Nr * Nt * rd * cfg.gamma_ri * ri[:, :, None] * gd[None, :, :]
    E_ul = (b - a ** 2) * Nr ** 2 * ru * np.sum(gu_s ** 2, axis=0)
    F_ul = b * Nr * gu_s.sum(axis=0)
    return SECoefficients(
        tau_f=cfg.tau_f, A_dl=A_dl, B_dl=B_dl, D_dl=D_dl, A_ul=A_ul, B_ul=B_ul,
        D_ul=D_ul, E_ul=E_ul, F_ul=F_ul, serve_dl=smap.serve_dl.copy(),
        serve_ul=smap.serve_ul.copy(), gamma_dl=gd, b_tilde=b, N_t=Nt,
    )


def _check_alloc(coef: SECoefficients, alloc: PowerAllocation, tol=1e-9):
    if alloc.c.shape != coef.A_dl.shape or alloc.theta.shape != coef.A_ul.shape:
        raise ValueError("allocation shape does not match coefficients")
    if np.any(alloc.c < 0) or np.any(alloc.theta < -tol) or np.any(alloc.theta > 1 + tol):
        raise ValueError("allocation outside its box constraints")
    load = coef.b_tilde * coef.N_t * np.sum(coef.gamma_dl * alloc.eta * coef.serve_dl, axis=1)
    if np.any(load > 1 + 1e-7):
        raise ValueError("allocation violates a per-AP power budget")


def _ratio(num, den):
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def sinr_dl(coef: SECoefficients, alloc: PowerAllocation) -> np.ndarray:
    c = alloc.c * coef.serve_dl
    num = np.sum(coef.A_dl * c, axis=0) ** 2
    den = np.einsum("kmq,mq->k", coef.B_dl, c ** 2) + coef.D_dl @ alloc.theta + 1.0
    return _ratio(num, den)


def sinr_ul(coef: SECoefficients, alloc: PowerAllocation) -> np.ndarray:
    eta = (alloc.c * coef.serve_dl) ** 2
    th = alloc.theta
    num = coef.A_ul * th
    den = coef.B_ul @ th + np.einsum("lik,ik->l", coef.D_ul, eta) + coef.E_ul * th + coef.F_ul
    return _ratio(num, den)


def se_lower_bounds(coef: SECoefficients, alloc: PowerAllocation, check: bool = True) -> SEReport:
    if check:
        _check_alloc(coef, alloc)
    return SEReport(coef.tau_f * np.log2(1.0 + sinr_dl(coef, alloc)),
                    coef.tau_f * np.log2(1.0 + sinr_ul(coef, alloc)))


def se_downlink_lb(coef: SECoefficients, alloc: PowerAllocation, k: int) -> float:
    _check_alloc(coef, alloc)
    return float(coef.tau_f * np.log2(1.0 + sinr_dl(coef, alloc)[k]))


def se_uplink_lb(coef: SECoefficients, alloc: PowerAllocation, l: int) -> float:
    _check_alloc(coef, alloc)
    return float(coef.tau_f * np.log2(1.0 + sinr_ul(coef, alloc)[l]))


# ---------------------------------------------------------------- moments ---

def closed_form_moments(scn: Scenario, smap: ServiceMap, q: QuantizerParams,
                        alloc: PowerAllocation, cfg: SystemConfig):
    """Expected power of every received-signal component, per UE.

    Returns (dl, ul): dicts term -> array over UEs. The DL distortion entry
    includes the coherent part sum_m N_t^2 gamma_mk^2 eta_mk that the
    lower-bound denominator leaves out; ``dl_tqd_encoded`` is the remainder.
    """
    a, b = q.a_tilde, q.b_tilde
    dist = b - a * a
    Nt, Nr = cfg.N_t, cfg.N_r
    rd, ru = cfg.rho_d, cfg.rho_u
    bd, gd = scn.beta_dl, scn.gamma_dl
    bu, gu = scn.beta_ul, scn.gamma_ul
    Sd = smap.serve_dl
    Su = smap.serve_ul.astype(float)
    c = alloc.c * Sd
    eta = c ** 2
    th = alloc.theta

    cross = bd.T @ (gd * eta)  # [k, q] = sum_m beta_mk gamma_mq eta_mq
    own = np.diag(cross).copy()
    dl = {
        "DS": a ** 2 * rd * Nt ** 2 * np.sum(c * gd, axis=0) ** 2,
        "BU": a ** 2 * rd * Nt * own,
        "MUI": a ** 2 * rd * Nt * (cross.sum(axis=1) - own),
        "UDI": ru * scn.beta_udi @ th,
        "N": np.ones(scn.K_d),
    }
    encoded = dist * rd * Nt * cross.sum(axis=1)
    dl["TQD"] = encoded + dist * rd * Nt ** 2 * np.sum(gd ** 2 * eta, axis=0)

    gus = gu * Su
    ri_load = scn.beta_ri @ np.sum(gd * eta, axis=1)  # [m] = sum_i beta_ri[m,i] sum_k gamma_ik eta_ik
    ri_per_ap = b * rd * Nr * Nt * cfg.gamma_ri * ri_load  # E|RI part of z_ml|^2 / gamma_ml
    mui_full = gus.T @ bu  # [l, q] = sum_m gamma_ml beta_mq
    ul = {
        "DS": a ** 2 * ru * th * Nr ** 2 * gus.sum(axis=0) ** 2,
        "BU": a ** 2 * ru * th * Nr * np.diag(mui_full),
        "MUI": a ** 2 * ru * Nr * (mui_full @ th - np.diag(mui_full) * th),
        "RI": a ** 2 * (gus.T @ ri_per_ap),
        "N": a ** 2 * Nr * gus.sum(axis=0),
    }
    ul["TQD"] = dist * (ru * Nr * (mui_full @ th) + ru * th * Nr ** 2 * np.sum(gus ** 2, axis=0)
                        + gus.T @ ri_per_ap + Nr * gus.sum(axis=0))
    return dl, ul, encoded


def _chunk_size(scn: Scenario, cfg: SystemConfig) -> int:
    M, K_d, K_u = scn.M, scn.K_d, scn.K_u
    per_trial = M * M * max(K_u, 1) * max(K_d, 1) + M * M * cfg.N_t * cfg.N_r * (1 + max(K_u, 1))
    return int(max(1, min(20000, 3_000_000 // per_trial)))


def _simulate_chunk(scn, smap, q, alloc, cfg, rng, T, want_terms=True):
    a, b = q.a_tilde, q.b_tilde
    dist = b - a * a
    rd, ru = cfg.rho_d, cfg.rho_u
    Nt, Nr = cfg.N_t, cfg.N_r
    M, K_d, K_u = scn.M, scn.K_d, scn.K_u
    Sd = smap.serve_dl
    Su = smap.serve_ul.astype(float)
    c = alloc.c * Sd
    eta = c ** 2
    sth = np.sqrt(alloc.theta)

    ch = draw_channels(scn, cfg, rng, trials=T)
    s_d = cn(rng, 1.0, (T, K_d))
    s_u = cn(rng, 1.0, (T, K_u))
    vs_d = cn(rng, dist * eta, (T, M, K_d))  # DL fronthaul distortion per (m, q)
    w_d = cn(rng, 1.0, (T, K_d))
    w_u = cn(rng, 1.0, (T, M, Nr))

    # ---- downlink
    G = np.einsum("tmkn,tmqn->tmkq", ch.g_dl, ch.g_dl_hat.conj())  # g_mk^T conj(ghat_mq)
    eff = np.einsum("mq,tmkq->tkq", c, G)  # coherent gain of stream q at UE k
    coh = np.einsum("tkk->tk", eff)
    mean_gain = Nt * np.sum(c * scn.gamma_dl, axis=0)
    dl = {}
    mui_streams = eff.copy()
    idx = np.arange(K_d)
    mui_streams[:, idx, idx] = 0.0
    if want_terms:
        dl["DS"] = a * np.sqrt(rd) * mean_gain * s_d
        dl["BU"] = a * np.sqrt(rd) * (coh - mean_gain) * s_d
        dl["MUI"] = a * np.sqrt(rd) * np.einsum("tkq,tq->tk", mui_streams, s_d)
        dl["UDI"] = np.sqrt(ru) * np.einsum("tkl,l,tl->tk", ch.h_udi, sth, s_u)
        dl["TQD"] = np.sqrt(rd) * np.einsum("tmkq,tmq->tk", G, vs_d)
        dl["N"] = w_d
    sig_d = a * a * rd * np.abs(coh) ** 2
    int_d = (a * a * rd * np.sum(np.abs(mui_streams) ** 2, axis=2)
             + dist * rd * np.einsum("mq,tmkq->tk", eta, np.abs(G) ** 2)
             + ru * np.einsum("tkl,l->tk", np.abs(ch.h_udi) ** 2, alloc.theta)
             + 1.0)
    sinr_d = sig_d / int_d

    # ---- uplink
    Gu = np.einsum("tmln,tmqn->tmlq", ch.g_ul_hat.conj(), ch.g_ul)  # ghat_ml^H g_mq
    tmp = np.matmul(ch.g_ul_hat.conj()[:, :, None], ch.H_ri)  # (T, M, M, K_u, N_t) [t,m,i,l,n]
    R = np.matmul(tmp, np.swapaxes(ch.g_dl_hat.conj(), -1, -2)[:, None])  # [t,m,i,l,k]
    R = R * Sd[None, None, :, None, :]  # only served DL streams leave AP i
    # per-AP received DL interference pieces
    ri_coh = np.einsum("tmilk,ik->tmlk", R, c)  # sum_i c_ik R (shared symbol s_k)
    ri_var = dist * np.einsum("tmilk,ik->tml", np.abs(R) ** 2, eta)
    gnorm = np.sum(np.abs(ch.g_ul_hat) ** 2, axis=-1)  # (T, M, K_u)
    v = (ru * np.einsum("tmlq,q->tml", np.abs(Gu) ** 2, alloc.theta)
         + rd * (a * a * np.sum(np.abs(ri_coh) ** 2, axis=-1) + ri_var)
         + gnorm)
    vs_u = cn(rng, dist * v, v.shape)

    Su_t = Su[None]
    own_u = np.einsum("tmll->tml", Gu)
    ul_coh = np.sum(Su_t * own_u, axis=1)  # (T, K_u)
    mean_u = Nr * np.sum(Su * scn.gamma_ul, axis=0)
    cross_u = np.einsum("ml,tmlq->tlq", Su, Gu)
    iu = np.arange(K_u)
    cross_u[:, iu, iu] = 0.0
    ri_sum = np.einsum("ml,tmlk->tlk", Su, ri_coh)  # coherent over serving APs
    R_sum = np.einsum("ml,tmilk->tlik", Su, R)
    ul = {}
    if want_terms:
        ul["DS"] = a * np.sqrt(ru) * sth * mean_u * s_u
        ul["BU"] = a * np.sqrt(ru) * sth * (ul_coh - mean_u) * s_u
        ul["MUI"] = a * np.sqrt(ru) * np.einsum("tlq,q,tq->tl", cross_u, sth, s_u)
        ul["RI"] = a * np.sqrt(rd) * (a * np.einsum("tlk,tk->tl", ri_sum, s_d)
                                      + np.einsum("tlik,tik->tl", R_sum, vs_d))
        noise = np.einsum("tmln,tmn->tml", ch.g_ul_hat.conj(), w_u)
        ul["N"] = a * np.sum(Su_t * noise, axis=1)
        ul["TQD"] = np.sum(Su_t * vs_u, axis=1)
    sig_u = a * a * ru * alloc.theta * np.abs(ul_coh) ** 2
    int_u = (a * a * ru * np.einsum("tlq,q->tl", np.abs(cross_u) ** 2, alloc.theta)
             + a * a * rd * (a * a * np.sum(np.abs(ri_sum) ** 2, axis=-1)
                             + dist * np.einsum("tlik,ik->tl", np.abs(R_sum) ** 2, eta))
             + a * a * np.sum(Su_t * gnorm, axis=1)
             + dist * np.sum(Su_t * v, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr_u = np.where(int_u > 0, sig_u / int_u, 0.0)
    return dl, ul, sinr_d, sinr_u


def _run_mc(scn, smap, q, alloc, cfg, trials, seed, want_terms):
    rng = make_rng(seed)
    chunk = _chunk_size(scn, cfg)
    done = 0
    terms_dl = {t: [] for t in DL_TERMS}
    terms_ul = {t: [] for t in UL_TERMS}
    se_d, se_u = [], []
    tf = cfg.tau_f
    while done < trials:
        T = min(chunk, trials - done)
        dl, ul, sd, su = _simulate_chunk(scn, smap, q, alloc, cfg, rng, T, want_terms)
        for t in dl:
            terms_dl[t].append(np.abs(dl[t]) ** 2)
        for t in ul:
            terms_ul[t].append(np.abs(ul[t]) ** 2)
        se_d.append(tf * np.log2(1.0 + sd))
        se_u.append(tf * np.log2(1.0 + su))
        done += T
    cat = lambda xs, k: np.concatenate(xs, axis=0) if xs else np.zeros((0, k))
    return ({t: cat(v, scn.K_d) for t, v in terms_dl.items() if v},
            {t: cat(v, scn.K_u) for t, v in terms_ul.items() if v},
            cat(se_d, scn.K_d), cat(se_u, scn.K_u))


def _mean_se(x: np.ndarray):
    n = x.shape[0]
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(x.shape[1:], np.inf)
    return mean, se


def ergodic_se_mc(scn: Scenario, smap: ServiceMap, q: QuantizerParams, alloc: PowerAllocation,
                  cfg: SystemConfig, trials: int, seed) -> MCReport:
    """Ergodic SE with the coherent combined gain known per realization."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    check_feasible(alloc, scn, smap, q, cfg.N_t, tol=1e-7)
    _, _, se_d, se_u = _run_mc(scn, smap, q, alloc, cfg, trials, seed, want_terms=False)
    md, sd = _mean_se(se_d)
    mu, su = _mean_se(se_u)
    total = se_d.sum(axis=1) + se_u.sum(axis=1)
    ts = total.std(ddof=1) / np.sqrt(trials) if trials > 1 else np.inf
    return MCReport(se_dl=md, se_ul=mu, stderr_dl=sd, stderr_ul=su, sum_stderr=float(ts), trials=trials)


@dataclass(frozen=True)
class MomentCheck:
    side: str
    term: str
    ue: int
    closed_form: float
    mc_estimate: float
    stderr: float

    @property
    def zscore(self) -> float:
        if self.stderr > 0:
            return abs(self.mc_estimate - self.closed_form) / self.stderr
        return 0.0 if np.isclose(self.mc_estimate, self.closed_form, rtol=1e-12, atol=1e-300) else np.inf


def moment_suite(scn, smap, q, alloc, cfg, trials: int, seed) -> list[MomentCheck]:
    """Closed form vs Monte-Carlo power for every (side, term, UE)."""
    cf_dl, cf_ul, _ = closed_form_moments(scn, smap, q, alloc, cfg)
    mc_dl, mc_ul, _, _ = _run_mc(scn, smap, q, alloc, cfg, trials, seed, want_terms=True)
    out = []
    for side, cf, mc in (("dl", cf_dl, mc_dl), ("ul", cf_ul, mc_ul)):
        for term in (DL_TERMS if side == "dl" else UL_TERMS):
            mean, se = _mean_se(mc[term])
            for u in range(len(cf[term])):
                out.append(MomentCheck(side, term, u, float(cf[term][u]), float(mean[u]), float(se[u])))
    return out


def moment_oracle(scn, smap, q, alloc, term: str, side: str, ue: int, trials: int, seed,
                  cfg: SystemConfig) -> MomentCheck:
    side = side.lower()
    term = term.upper()
    valid = DL_TERMS if side == "dl" else UL_TERMS if side == "ul" else ()
    if term not in valid:
        raise ValueError(f"term {term!r} is not defined on side {side!r}")
    for rec in moment_suite(scn, smap, q, alloc, cfg, trials, seed):
        if rec.side == side and rec.term == term and rec.ue == ue:
            return rec
    raise IndexError(f"no {side} UE {ue}")


def se_rows(lb: SEReport, ub: MCReport | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ue_id", "side", "se_lb", "se_ub", "stderr"])
    for side, lo, hi, err in (("dl", lb.se_dl, None if ub is None else ub.se_dl, None if ub is None else ub.stderr_dl),
                              ("ul", lb.se_ul, None if ub is None else ub.se_ul, None if ub is None else ub.stderr_ul)):
        for i in range(len(lo)):
            w.writerow([i, side, repr(float(lo[i])),
                        "" if hi is None else repr(float(hi[i])),
                        "" if err is None else repr(float(err[i]))])
    return buf.getvalue()
