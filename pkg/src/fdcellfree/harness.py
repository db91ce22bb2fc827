"""Multi-drop experiment sweeps with CSV output."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .allocation import baseline_alloc
from .config import SystemConfig, dbm_to_watt
from .fronthaul import quantizer_for, select_aps
from .power_model import wsee
from .scenario import make_drop, spawn_seeds
from .se_analysis import build_coefficients, ergodic_se_mc, se_lower_bounds
from .wsee_optimizer import QoSInfeasible, optimize

KINDS = ("se_vs_power", "wsee_vs_power", "wsee_vs_bits")
BASELINES = ("EPA1", "EPA2", "RPA")

_COLUMNS = {
    "se_vs_power": ["case", "p_dbm", "drop", "sum_se_lb", "sum_se_ub", "ub_stderr", "bound_ok", "flag"],
    "wsee_vs_power": ["p_dbm", "drop", "allocator", "wsee", "sum_se", "converged", "flag"],
    "wsee_vs_bits": ["c_fh", "nu", "drop", "allocator", "wsee", "sum_se", "converged", "flag"],
}
_METRICS = {
    "se_vs_power": ["sum_se_lb", "sum_se_ub"],
    "wsee_vs_power": ["wsee", "sum_se"],
    "wsee_vs_bits": ["wsee", "sum_se"],
}


@dataclass
class ExperimentSpec:
    kind: str
    sweep: tuple = ()
    allocators: tuple = ()
    cases: tuple = ()
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        d = default_spec(self.kind)
        self.sweep = tuple(self.sweep) or d["sweep"]
        self.allocators = tuple(self.allocators) or d["allocators"]
        self.cases = tuple(self.cases) or d["cases"]
        if not self.sweep:
            raise ValueError("sweep must be nonempty")


def default_spec(kind: str) -> dict:
    if kind == "se_vs_power":
        return dict(sweep=(0.0, 10.0, 20.0, 30.0), allocators=("EPA1",), cases=("perfect", "limited"))
    if kind == "wsee_vs_power":
        return dict(sweep=(0.0, 10.0, 20.0, 30.0), allocators=("OPA",) + BASELINES, cases=("default",))
    return dict(sweep=(1, 2, 3, 4), allocators=("OPA",), cases=(100e6, 10e6))


@dataclass
class ResultTable:
    kind: str
    rows: list = field(default_factory=list)
    aggregate: list = field(default_factory=list)
    checks: list = field(default_factory=list)  # (name, ok, detail)

    @property
    def columns(self):
        return _COLUMNS[self.kind]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows + self.aggregate:
            w.writerow({k: _cell(v) for k, v in r.items()})
        return buf.getvalue()

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def drop_seeds(cfg: SystemConfig):
    return np.random.SeedSequence(cfg.seed).spawn(cfg.drops)


def _with_power(cfg: SystemConfig, p_dbm: float) -> SystemConfig:
    p = dbm_to_watt(p_dbm)
    return cfg.replace(p_d=p, p_u=p)


def _se_drop(spec, cfg, d, seed):
    s_scn, s_mc = spawn_seeds(seed, 2)
    rows = []
    for p_dbm in spec.sweep:
        for case in spec.cases:
            c = _with_power(cfg, p_dbm).replace(perfect_fronthaul=(case == "perfect"))
            scn = make_drop(c, s_scn)
            smap = select_aps(scn, c)
            q = quantizer_for(c)
            alloc = baseline_alloc(spec.allocators[0], scn, smap, q, c, 0)
            lb = se_lower_bounds(build_coefficients(scn, smap, q, c), alloc)
            ub = ergodic_se_mc(scn, smap, q, alloc, c, c.mc_trials, s_mc)
            ok = bool(np.all(lb.se_dl <= ub.se_dl + 3 * ub.stderr_dl)
                      and np.all(lb.se_ul <= ub.se_ul + 3 * ub.stderr_ul))
            rows.append(dict(case=case, p_dbm=float(p_dbm), drop=d, sum_se_lb=lb.sum_se,
                             sum_se_ub=ub.sum_se, ub_stderr=ub.sum_stderr, bound_ok=ok, flag=""))
    return rows


def _alloc_rows(c, seed, allocators):
    """WSEE/sum-SE per allocator on one drop; QoS-infeasible OPA is flagged."""
    s_scn, s_rpa = spawn_seeds(seed, 2)
    scn = make_drop(c, s_scn)
    smap = select_aps(scn, c)
    q = quantizer_for(c)
    out = []
    for name in allocators:
        if name == "OPA":
            try:
                res = optimize(scn, smap, q, c)
            except QoSInfeasible as exc:
                out.append(dict(allocator=name, wsee=math.nan, sum_se=math.nan, converged=False,
                                flag=f"qos_infeasible: {exc}"))
                continue
            out.append(dict(allocator=name, wsee=res.report.wsee, sum_se=res.report.sum_se,
                            converged=res.converged, flag=res.flag))
        else:
            alloc = baseline_alloc(name, scn, smap, q, c, np.random.default_rng(s_rpa))
            rep = wsee(alloc, scn, smap, q, c)
            out.append(dict(allocator=name, wsee=rep.wsee, sum_se=rep.sum_se, converged=True, flag=""))
    return out


def _wsee_power_drop(spec, cfg, d, seed):
    rows = []
    for p_dbm in spec.sweep:
        for r in _alloc_rows(_with_power(cfg, p_dbm), seed, spec.allocators):
            rows.append(dict(p_dbm=float(p_dbm), drop=d, **r))
    return rows


def _wsee_bits_drop(spec, cfg, d, seed):
    rows = []
    for C in spec.cases:
        for nu in spec.sweep:
            c = cfg.replace(C_fh=float(C), nu=int(nu))
            for r in _alloc_rows(c, seed, spec.allocators):
                rows.append(dict(c_fh=float(C), nu=int(nu), drop=d, **r))
    return rows


_JOBS = {"se_vs_power": _se_drop, "wsee_vs_power": _wsee_power_drop, "wsee_vs_bits": _wsee_bits_drop}


def _job(args):
    spec, cfg, d, seed = args
    return _JOBS[spec.kind](spec, cfg, d, seed)


def _group_key(kind, r):
    if kind == "se_vs_power":
        return (r["case"], r["p_dbm"])
    if kind == "wsee_vs_power":
        return (r["p_dbm"], r["allocator"])
    return (r["c_fh"], r["nu"], r["allocator"])


def _aggregate(kind, rows):
    groups = {}
    for r in rows:
        groups.setdefault(_group_key(kind, r), []).append(r)
    out = []
    for key, rs in groups.items():
        base = {k: v for k, v in rs[0].items() if k not in _METRICS[kind] and k not in ("drop", "flag", "ub_stderr", "bound_ok", "converged")}
        mean = dict(base, drop="mean", flag="")
        err = dict(base, drop="stderr", flag="")
        for m in _METRICS[kind]:
            x = np.array([r[m] for r in rs], float)
            x = x[np.isfinite(x)]
            mean[m] = float(x.mean()) if len(x) else math.nan
            err[m] = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
        n_bad = sum(1 for r in rs if r.get("flag", "").startswith("qos_infeasible"))
        if n_bad:
            mean["flag"] = f"{n_bad} qos-infeasible drops excluded"
        out.append(mean)
        out.append(err)
    return out


def _checks(kind, spec, rows):
    checks = []
    if kind == "se_vs_power":
        bad = [r for r in rows if not r["bound_ok"]]
        checks.append(("lower bound <= upper bound + 3 stderr", not bad, f"{len(bad)} violating rows"))
        if {"perfect", "limited"} <= set(spec.cases):
            for p in spec.sweep:
                lim = np.mean([r["sum_se_lb"] for r in rows if r["case"] == "limited" and r["p_dbm"] == p])
                per = np.mean([r["sum_se_lb"] for r in rows if r["case"] == "perfect" and r["p_dbm"] == p])
                checks.append((f"sum-SE limited < perfect at {p:g} dBm", bool(lim < per), f"{lim:.4f} vs {per:.4f}"))
    elif "OPA" in spec.allocators:
        key = (lambda r: (r["p_dbm"], r["drop"])) if kind == "wsee_vs_power" else (lambda r: (r["c_fh"], r["nu"], r["drop"]))
        groups = {}
        for r in rows:
            groups.setdefault(key(r), {})[r["allocator"]] = r
        worst = math.inf
        for g in groups.values():
            others = [g[a]["wsee"] for a in g if a != "OPA"]
            if others and math.isfinite(g["OPA"]["wsee"]):
                worst = min(worst, g["OPA"]["wsee"] - max(others))
        if any(a != "OPA" for a in spec.allocators):
            checks.append(("OPA >= every baseline", worst >= -1e-9, f"min margin {worst:.6g}"))
        infeas = sum(1 for r in rows if r["flag"].startswith("qos_infeasible"))
        checks.append(("OPA QoS-feasible on every drop", infeas == 0, f"{infeas} infeasible rows"))
    return checks


def run_experiment(spec: ExperimentSpec, cfg: SystemConfig) -> ResultTable:
    cfg.validate()
    seeds = drop_seeds(cfg)
    jobs = [(spec, cfg, d, s) for d, s in enumerate(seeds)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            per_drop = list(ex.map(_job, jobs))  # map keeps drop order
    else:
        per_drop = [_job(j) for j in jobs]
    rows = [r for rs in per_drop for r in rs]
    rows.sort(key=lambda r: (_group_key(spec.kind, r), r["drop"]))
    table = ResultTable(spec.kind, rows, _aggregate(spec.kind, rows), _checks(spec.kind, spec, rows))
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            fh.write(table.to_csv())
    return table
