"""Config-driven ensembles over the agent-based market.

Every experiment expands into independent jobs (one simulation, or a
small paired group of simulations, per job).  Jobs carry everything they
need, run in any order on any worker, and come back in submission order,
so reports do not depend on the degree of parallelism.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import metrics as mt
from .abm import (LOG_P0, Combined, DependencyCap, DiversityCap, SimConfig, SpeedBump,
                  intervention_label, parse_intervention, simulate)
from .analytic import AdoptionGameSpec, hysteresis_loop, stability_margin
from .bands import band, check
from .errors import ConfigError
from .params import ModelParams

FULL_T = 5040
REDUCED_T = 1260

KINDS = ("calibration", "monoculture", "tail-grid", "performative", "interventions",
         "hysteresis", "ablation", "calm-storm")

DESCRIPTIONS = {
    "calibration": "baseline moments, dispersion ratio and multiplier vs phi = 0",
    "monoculture": "adoption from phi0 = 0.1 with dependency and skill dynamics",
    "tail-grid": "5x5 (phi, rho) grid of drawdowns, excess vol and multipliers",
    "performative": "beta sweep of instability, performativity and vol persistence",
    "interventions": "baseline vs diversity cap, speed bump, dependency cap, combined",
    "hysteresis": "pressure ramp up and down, forward vs backward crossing times",
    "ablation": "channel ablation: Kyle, +rho, +rho+beta, full",
    "calm-storm": "diversified vs monoculture unconditional and tail risk",
}

DEFAULT_AXES = {
    "tail-grid": {"phi": (0.1, 0.3, 0.5, 0.7, 0.9), "rho": (0.3, 0.4, 0.5, 0.6, 0.7)},
    "performative": {"beta": (0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9)},
    "hysteresis": {"kappa": (0.0, 0.02)},
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    base: ModelParams = field(default_factory=ModelParams)
    axes: dict = field(default_factory=dict)
    seeds: int = 20
    master_seed: int = 0
    jobs: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("experiment", f"unknown experiment {self.kind!r}")
        if not isinstance(self.seeds, int) or self.seeds < 1:
            raise ConfigError("seeds", f"must be an integer >= 1, got {self.seeds!r}")
        names = {f.name for f in fields(ModelParams)}
        for name, values in self.axes.items():
            if name not in names:
                raise ConfigError(name, "grid axis is not a model parameter")
            for v in values:
                self.base.replace(**{name: v})

    def axis(self, name):
        return tuple(self.axes.get(name, DEFAULT_AXES[self.kind][name]))


@dataclass
class SweepCell:
    point: dict
    seed: int
    record: mt.MetricsRecord
    unstable: bool = False
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    kind: str
    cells: list
    summary: dict
    checks: dict
    table: str
    series: dict = field(default_factory=dict)

    def passed(self):
        return all(self.checks.values())


# ---------------------------------------------------------------- job plumbing

def nan_record():
    return mt.MetricsRecord(*([math.nan] * len(mt.MetricsRecord.columns())))


def record_from_sim(res):
    """MetricsRecord for one path; NaN sentinels for an unstable one."""
    if res.unstable:
        return nan_record()
    rec = mt.metrics_from_returns(res.r, np.exp(np.concatenate([[LOG_P0], res.p])))
    if len(res.p) > 252:
        rec.performativity_index = float(np.nanmean(mt.performativity_index(res)))
    return rec


def _config(params, seed, run_index, intervention=None, **kw):
    return SimConfig(params, intervention, seed=seed, run_index=run_index, **kw)


def _run_parallel(fn, jobs, n_jobs):
    if n_jobs == 1 or len(jobs) == 1:
        return [fn(*j) for j in jobs]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*j) for j in jobs)


def _median(values):
    a = np.asarray([v for v in values if v is not None], dtype=float)
    a = a[np.isfinite(a)]
    return float(np.median(a)) if a.size else math.nan


def _quantiles(values, qs):
    a = np.asarray([v for v in values if v is not None], dtype=float)
    a = a[np.isfinite(a)]
    if not a.size:
        return tuple(math.nan for _ in qs)
    return tuple(float(np.quantile(a, q)) for q in qs)


def _fmt(x):
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.4g}"
    return str(x)


def _table(header, rows):
    cells = [[_fmt(x) for x in r] for r in rows]
    width = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    line = lambda r: "  ".join(s.rjust(w) for s, w in zip(r, width))
    return "\n".join([line(header), line(["-" * w for w in width])] + [line(r) for r in cells])


def _check_table(checks):
    return "\n".join(f"[{'PASS' if v else 'FAIL'}] {k}" for k, v in checks.items())


def _bands(kind, summary, names):
    """(label, passed) pairs for summary values against the shipped bands."""
    return [check(title, f"{kind}.{key}", summary[key]) for key, title in names.items()]


def _horizon(spec, long=False):
    """Long-run experiments use at least the full horizon (terminal states)."""
    t = spec.base.n_periods
    return max(t, FULL_T) if long else t


# ---------------------------------------------------------------- calibration

def _calibration_job(params, seed, k):
    res = simulate(_config(params, seed, k, record_agents=True))
    base = simulate(_config(params.replace(phi=0.0), seed, k))
    rec = record_from_sim(res)
    extra = {}
    if not res.unstable and not base.unstable:
        rec.empirical_multiplier = mt.empirical_multiplier(res, base)
        mask = res.adopter_mask[-1]
        if mask.sum() >= 2:
            stress = mt.stress_mask(res.r[1:])
            rec.dispersion_ratio_ai = mt.dispersion_ratio(res.agent_returns[1:], mask, stress)
        if (~mask).sum() >= 2:
            extra["dispersion_ratio_h"] = mt.dispersion_ratio(
                res.agent_returns[1:], ~mask, mt.stress_mask(res.r[1:]))
    return SweepCell({"phi": params.phi, "rho": params.rho, "beta": params.beta},
                     k, rec, res.unstable, extra)


def run_calibration(spec):
    """Baseline ensemble: calibration moments, Delta_AI and M-hat vs phi = 0."""
    p = spec.base
    cells = _run_parallel(_calibration_job, [(p, spec.master_seed, k) for k in range(spec.seeds)],
                          spec.jobs)
    get = lambda name: _median(getattr(c.record, name) for c in cells)
    s = {"ann_vol": get("ann_vol"), "kurtosis": get("kurtosis"), "skew": get("skew"),
         "abs_autocorr_lag1": get("abs_autocorr_lag1"), "dispersion_ratio_ai": get("dispersion_ratio_ai"),
         "dispersion_ratio_h": _median(c.extra.get("dispersion_ratio_h") for c in cells),
         "empirical_multiplier": get("empirical_multiplier"),
         "unstable_runs": sum(c.unstable for c in cells)}
    checks = dict(_bands("calibration", s, {
        "ann_vol": "median annualised vol", "kurtosis": "median raw kurtosis",
        "skew": "median skew", "abs_autocorr_lag1": "median lag-1 |r| autocorrelation",
        "dispersion_ratio_ai": "median Delta_AI",
        "empirical_multiplier": "median multiplier vs phi = 0"}))
    table = _table(list(s), [list(s.values())])
    return ExperimentReport("calibration", cells, s, checks, table + "\n" + _check_table(checks))


# ---------------------------------------------------------------- monoculture

def _mono_job(params, seed, k):
    res = simulate(_config(params, seed, k))
    rec = record_from_sim(res)
    floor_hit = bool(np.nanmin(res.min_skill) <= params.skill_floor * (1 + 1e-9))
    extra = {"phi_T": float(res.phi_t[-1]), "dbar_T": float(res.mean_d[-1]),
             "dbar_mean": float(np.nanmean(res.mean_d)), "floor_hit": floor_hit}
    return SweepCell({"phi0": params.phi, "kappa": params.kappa}, k, rec, res.unstable, extra), \
        (res.phi_t, res.mean_d, res.mean_sigma_h2)


def thirds_slopes(path):
    """Mean slope over the first, middle and last third of a path."""
    x = np.asarray(path, dtype=float)
    parts = np.array_split(np.arange(x.size), 3)
    return tuple(float((x[i[-1]] - x[i[0]]) / max(len(i) - 1, 1)) for i in parts)


def run_monoculture(spec):
    p = spec.base.replace(phi=spec.options.get("phi0", 0.1), adoption_dynamic=True,
                          n_periods=_horizon(spec, long=True))
    out = _run_parallel(_mono_job, [(p, spec.master_seed, k) for k in range(spec.seeds)], spec.jobs)
    cells = [c for c, _ in out]
    phi_paths = np.array([s[0] for _, s in out])
    series = {"t": np.arange(p.n_periods),
              "phi_t": np.nanmedian(phi_paths, axis=0),
              "mean_d": np.nanmedian(np.array([s[1] for _, s in out]), axis=0),
              "mean_sigma_h2": np.nanmedian(np.array([s[2] for _, s in out]), axis=0)}
    slopes = thirds_slopes(series["phi_t"])
    s = {"phi_T": _median(c.extra["phi_T"] for c in cells),
         "dbar_T": _median(c.extra["dbar_T"] for c in cells),
         "dbar_time_mean": _median(c.extra["dbar_mean"] for c in cells),
         "floor_share": float(np.mean([c.extra["floor_hit"] for c in cells])),
         "slope_first": slopes[0], "slope_middle": slopes[1], "slope_last": slopes[2],
         "s_curve": slopes[1] > max(slopes[0], slopes[2])}
    checks = dict(_bands("monoculture", s, {
        "phi_T": "terminal phi", "dbar_T": "terminal mean dependency",
        "floor_share": "share of seeds reaching the skill floor"}))
    checks["adoption grows"] = s["phi_T"] > p.phi
    table = _table(list(s), [list(s.values())])
    return ExperimentReport("monoculture", cells, s, checks, table + "\n" + _check_table(checks), series)


# ---------------------------------------------------------------- tail grid

def _grid_job(params, seed, k, phis):
    """All phi cells at one rho for one seed, plus the phi = 0 reference."""
    base = simulate(_config(params.replace(phi=0.0), seed, k))
    cells = []
    for phi in phis:
        res = simulate(_config(params.replace(phi=phi), seed, k))
        rec = record_from_sim(res)
        if not (res.unstable or base.unstable):
            rec.empirical_multiplier = mt.empirical_multiplier(res, base)
        cells.append(SweepCell({"phi": phi, "rho": params.rho}, k, rec, res.unstable))
    return cells


def count_inversions(values):
    """Strict decreases along a sequence meant to be non-decreasing."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) < 0))


def run_tail_grid(spec):
    phis, rhos = spec.axis("phi"), spec.axis("rho")
    jobs = [(spec.base.replace(rho=rho), spec.master_seed, k, phis)
            for rho in rhos for k in range(spec.seeds)]
    cells = [c for group in _run_parallel(_grid_job, jobs, spec.jobs) for c in group]
    med = {}
    for phi in phis:
        for rho in rhos:
            sel = [c.record for c in cells if c.point == {"phi": phi, "rho": rho}]
            med[(phi, rho)] = {k: _median(getattr(r, k) for r in sel)
                               for k in ("max_drawdown", "ann_vol", "cte95", "empirical_multiplier")}
    ref = med[(phis[0], rhos[0])]
    corner = med[(phis[-1], rhos[-1])]
    rows = []
    for (phi, rho), m in med.items():
        excess = m["ann_vol"] / ref["ann_vol"] - 1.0
        rows.append([phi, rho, m["max_drawdown"], excess, m["cte95"], m["empirical_multiplier"]])
    dd = np.array([[abs(med[(phi, rho)]["max_drawdown"]) for rho in rhos] for phi in phis])
    inv_phi = [count_inversions(dd[:, j]) for j in range(len(rhos))]
    inv_rho = [count_inversions(dd[i, :]) for i in range(len(phis))]
    ratio = corner["max_drawdown"] / ref["max_drawdown"]
    s = {"corner_drawdown_ratio": ratio,
         "corner_excess_vol": corner["ann_vol"] / ref["ann_vol"] - 1.0,
         "inversions_along_phi": inv_phi, "inversions_along_rho": inv_rho,
         "max_inversions_per_row": max(inv_phi + inv_rho),
         "cells": {f"{phi:g},{rho:g}": m for (phi, rho), m in med.items()}}
    checks = dict(_bands("tail-grid", s, {
        "corner_drawdown_ratio": "corner drawdown ratio",
        "max_inversions_per_row": "inversions per row",
        "corner_excess_vol": "corner excess vol"}))
    table = _table(["phi", "rho", "median_mdd", "excess_vol", "cte95", "multiplier"], rows)
    return ExperimentReport("tail-grid", cells, s, checks, table + "\n" + _check_table(checks))


# ---------------------------------------------------------------- performative

def _window_split(res, window=252):
    """Early and late thirds of the rolling PI, and early/late vol persistence."""
    pi = mt.performativity_index(res, window)
    n = len(pi)
    early, late = np.nanmean(pi[: n // 3]), np.nanmean(pi[-(n // 3):])
    r = res.r
    half = len(r) // 3
    vp_early, vp_late = mt.vol_persistence(r[:half]), mt.vol_persistence(r[-half:])
    return float(early), float(late), vp_early, vp_late


def _perf_job(params, seed, k):
    res = simulate(_config(params, seed, k))
    rec = record_from_sim(res)
    extra = {"pi_early": math.nan, "pi_late": math.nan, "vp_early": math.nan, "vp_late": math.nan}
    if not res.unstable:
        e, l, ve, vl = _window_split(res)
        extra = {"pi_early": e, "pi_late": l, "vp_early": ve, "vp_late": vl}
    return SweepCell({"beta": params.beta}, k, rec, res.unstable, extra)


def beta_boundary(params):
    """beta at which the stability margin reaches zero, in depth-weighted units."""
    a = params.n_agents * params.a_ai * params.lambda0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if stability_margin(params.phi, params.rho, mid, a, 1.0) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def run_performative(spec):
    p0 = spec.base.replace(phi=spec.options.get("phi0", 0.1), adoption_dynamic=True)
    bound = beta_boundary(spec.base)
    betas = [b for b in spec.axis("beta") if b < bound]
    jobs = [(p0.replace(beta=b), spec.master_seed, k) for b in betas for k in range(spec.seeds)]
    cells = _run_parallel(_perf_job, jobs, spec.jobs)
    rows, per = [], {}
    for b in betas:
        sel = [c for c in cells if c.point["beta"] == b]
        m = {"instability_freq": float(np.mean([c.unstable for c in sel]))}
        for key in ("pi_early", "pi_late", "vp_early", "vp_late"):
            m[key] = _median(c.extra[key] for c in sel)
        per[b] = m
        rows.append([b] + list(m.values()))
    top = max(betas)
    s = {"beta_boundary": bound, "per_beta": {f"{b:g}": m for b, m in per.items()}}
    checks = {}
    if 0.0 in per:
        b = band("performative.beta0_abs_pi")
        checks[f"beta = 0: |PI| {b.label()}"] = (b.contains(abs(per[0.0]["pi_late"]))
                                                 and b.contains(abs(per[0.0]["pi_early"])))
        checks["beta = 0: no instability"] = per[0.0]["instability_freq"] == 0
    if 0.3 in per:
        checks["beta = 0.3: PI late > early"] = per[0.3]["pi_late"] > per[0.3]["pi_early"]
    checks[f"beta = {top:g}: vol persistence late > early"] = per[top]["vp_late"] > per[top]["vp_early"]
    table = _table(["beta", "instability", "pi_early", "pi_late", "vp_early", "vp_late"], rows)
    return ExperimentReport("performative", cells, s, checks, table + "\n" + _check_table(checks))


# ---------------------------------------------------------------- interventions

ARMS = (None, DiversityCap(0.5), SpeedBump(5), DependencyCap(0.7), Combined())


def _arm_job(params, intervention, seed, k):
    res = simulate(_config(params, seed, k, intervention))
    return SweepCell({"arm": intervention_label(intervention)}, k, record_from_sim(res), res.unstable)


def sign_test_greater(diffs):
    """One-sided sign-test p-value that paired differences are positive."""
    d = np.asarray(diffs, dtype=float)
    d = d[np.isfinite(d) & (d != 0)]
    if d.size == 0:
        return 1.0
    return float(stats.binomtest(int(np.sum(d > 0)), d.size, 0.5, alternative="greater").pvalue)


def run_interventions(spec):
    arms = [parse_intervention(a) if isinstance(a, str) else a for a in spec.options.get("arms", ARMS)]
    if None not in arms:
        arms = [None] + arms
    jobs = [(spec.base, a, spec.master_seed, k) for a in arms for k in range(spec.seeds)]
    cells = _run_parallel(_arm_job, jobs, spec.jobs)
    by = {}
    for c in cells:
        by.setdefault(c.point["arm"], {})[c.seed] = c.record
    base = by["baseline"]
    base_vol = _median(r.ann_vol for r in base.values())
    rows, per = [], {}
    for label, recs in by.items():
        seeds = sorted(recs)
        vol = _median(recs[k].ann_vol for k in seeds)
        cte = _median(recs[k].cte95 for k in seeds)
        mdd = _median(recs[k].max_drawdown for k in seeds)
        # cte95 is a signed loss-tail mean, so improvement is arm - baseline > 0
        d_cte = [recs[k].cte95 - base[k].cte95 for k in seeds]
        d_vol = [base[k].ann_vol - recs[k].ann_vol for k in seeds]
        m = {"ann_vol": vol, "cte95": cte, "max_drawdown": mdd,
             "vol_reduction": 1.0 - vol / base_vol,
             "median_cte95_gain": _median(d_cte), "p_cte95_improves": sign_test_greater(d_cte),
             "p_vol_falls": sign_test_greater(d_vol)}
        per[label] = m
        rows.append([label] + list(m.values()))
    dep, div, sb = per.get("DependencyCap(0.7)"), per.get("DiversityCap(0.5)"), per.get("SpeedBump(5)")
    checks = {}
    if dep:
        label, ok = check("DependencyCap(0.7): vol reduction", "interventions.dependency_vol_reduction",
                          dep["vol_reduction"])
        checks[label] = ok
        checks["DependencyCap(0.7): CTE95 improved"] = dep["median_cte95_gain"] > 0
    if sb:
        checks["SpeedBump(5): no significant CTE95 improvement"] = not (
            sb["p_cte95_improves"] < 0.05 and sb["median_cte95_gain"] > 0)
    if div and dep:
        checks["DiversityCap(0.5): 0 < vol reduction < DependencyCap's"] = \
            0.0 < div["vol_reduction"] < dep["vol_reduction"]
    table = _table(["arm", "ann_vol", "cte95", "max_dd", "vol_red", "cte95_gain", "p_cte", "p_vol"], rows)
    return ExperimentReport("interventions", cells, {"arms": per}, checks,
                            table + "\n" + _check_table(checks))


# ---------------------------------------------------------------- hysteresis

def ramp_schedule(n_epochs, peak, ramp=80, hold=40):
    """Additive adoption pressure: up over ``ramp`` epochs, hold, down, then zero."""
    up = list(np.linspace(0.0, peak, ramp))
    sched = up + [peak] * hold + up[::-1]
    sched += [0.0] * max(n_epochs - len(sched), 0)
    return tuple(float(x) for x in sched[:n_epochs])


def crossing_times(phi_t, midpoint, down_start):
    """Periods to cross ``midpoint`` upward from 0 and downward from ``down_start``.

    A backward crossing that never happens is censored at the horizon and
    flagged.
    """
    phi_t = np.asarray(phi_t)
    up = np.flatnonzero(phi_t >= midpoint)
    t_up = int(up[0]) if up.size else len(phi_t)
    tail = phi_t[down_start:]
    dn = np.flatnonzero(tail <= midpoint)
    censored = dn.size == 0
    t_dn = len(tail) if censored else int(dn[0])
    return t_up, t_dn, censored


def _hyst_job(params, seed, k, sched, down_start, midpoint):
    res = simulate(_config(params, seed, k, pressure=sched))
    t_up, t_dn, cens = crossing_times(res.phi_t, midpoint, down_start)
    sig_ratio = math.sqrt(res.mean_sigma_h2[-1] / params.sigma_h0 ** 2)
    extra = {"t_forward": t_up, "t_backward": t_dn, "censored": cens,
             "ratio": t_dn / max(t_up, 1), "sigma_h_ratio": sig_ratio, "phi_T": float(res.phi_t[-1])}
    return SweepCell({"kappa": params.kappa}, k, record_from_sim(res), res.unstable, extra)


def run_hysteresis(spec):
    o = spec.options
    p0 = spec.base.replace(phi=o.get("phi0", 0.1), adoption_dynamic=True,
                           n_periods=_horizon(spec, long=True))
    ramp, hold = o.get("ramp_epochs", 80), o.get("hold_epochs", 40)
    # the default peak puts the reversible (kappa = 0) midpoint crossing
    # about half-way up the ramp, so its two crossing times match
    sched = ramp_schedule(p0.n_periods // p0.epoch + 1, o.get("peak", 1.1), ramp, hold)
    down_start = (ramp + hold) * p0.epoch
    mid = o.get("midpoint", 0.35)
    kappas = spec.axis("kappa")
    jobs = [(p0.replace(kappa=kap), spec.master_seed, k, sched, down_start, mid)
            for kap in kappas for k in range(spec.seeds)]
    cells = _run_parallel(_hyst_job, jobs, spec.jobs)
    per, rows = {}, []
    for kap in kappas:
        sel = [c for c in cells if c.point["kappa"] == kap]
        m = {key: _median(c.extra[key] for c in sel)
             for key in ("t_forward", "t_backward", "ratio", "sigma_h_ratio", "phi_T")}
        m["censored_share"] = float(np.mean([c.extra["censored"] for c in sel]))
        per[kap] = m
        rows.append([kap] + list(m.values()))
    ref = per.get(0.0)
    for kap, m in per.items():
        m["ratio_vs_kappa0"] = m["ratio"] / ref["ratio"] if ref else math.nan
    checks = {}
    for kap, m in per.items():
        if kap > 0:
            label, ok = check(f"kappa = {kap:g}: backward/forward ratio", "hysteresis.ratio", m["ratio"])
            checks[label] = ok
            checks[f"kappa = {kap:g}: sigma_H(T)/sigma_H(0) > 1"] = m["sigma_h_ratio"] > 1.0
            if ref:
                checks[f"kappa = {kap:g}: ratio exceeds kappa = 0 ratio"] = m["ratio"] > ref["ratio"]
    if ref:
        label, ok = check("kappa = 0: crossing-time ratio", "hysteresis.kappa0_ratio", ref["ratio"])
        checks[label] = ok
        checks["kappa = 0: sigma_H unchanged"] = abs(ref["sigma_h_ratio"] - 1.0) < 1e-12
    table = _table(["kappa", "t_fwd", "t_bwd", "ratio", "sigH_ratio", "phi_T", "censored"], rows)
    return ExperimentReport("hysteresis", cells, {"midpoint": mid, "per_kappa": {f"{k:g}": m for k, m in per.items()}},
                            checks, table + "\n" + _check_table(checks))


# ---------------------------------------------------------------- ablation

def ablation_arms(base):
    kappa = base.kappa if base.kappa > 0 else 0.02
    return {
        "Kyle": base.replace(rho=0.0, beta=0.0, kappa=0.0),
        "+rho": base.replace(beta=0.0, kappa=0.0),
        "+rho+beta": base.replace(kappa=0.0),
        "full": base.replace(kappa=kappa),
    }


def _ablation_job(label, params, seed, k):
    """Arm run and its beta = 0 twin, paired by seed."""
    arm = simulate(_config(params, seed, k))
    no_beta = simulate(_config(params.replace(beta=0.0), seed, k))
    rec = record_from_sim(arm)
    extra = {"multiplier": math.nan, "excess_common_variance": math.nan}
    if not (arm.unstable or no_beta.unstable):
        extra["multiplier"] = mt.empirical_multiplier(arm, no_beta, reference="exogenous")
        extra["excess_common_variance"] = mt.common_noise_share(arm.r, arm.eta_t)
        rec.empirical_multiplier = extra["multiplier"]
    return SweepCell({"arm": label}, k, rec, arm.unstable, extra)


def analytic_gap(kappa, duration_T=2520):
    spec = AdoptionGameSpec()
    res = hysteresis_loop(spec, np.linspace(0.0, 2.0, 401), kappa=kappa, duration_T=duration_T)
    return 0.0 if res.hysteresis_gap is None else float(res.hysteresis_gap)


EXPECTED_FLAGS = {
    "Kyle": (False, False, False),
    "+rho": (False, True, False),
    "+rho+beta": (True, True, False),
    "full": (True, True, True),
}


def run_ablation(spec):
    arms = ablation_arms(spec.base)
    tol = spec.options.get("tolerance", 0.02)
    jobs = [(label, p, spec.master_seed, k) for label, p in arms.items() for k in range(spec.seeds)]
    cells = _run_parallel(_ablation_job, jobs, spec.jobs)
    step = 2.0 / 400
    per, rows = {}, []
    for label, p in arms.items():
        sel = [c for c in cells if c.point["arm"] == label]
        mult = _median(c.extra["multiplier"] for c in sel)
        excess = _median(c.extra["excess_common_variance"] for c in sel)
        gap = analytic_gap(p.kappa)
        flags = (mult > 1.0 + tol, excess > tol, gap > step / 2)
        per[label] = {"multiplier": mult, "excess_common_variance": excess, "hysteresis_gap": gap,
                      "flags": flags, "expected": EXPECTED_FLAGS[label]}
        rows.append([label, mult, excess, gap, *flags])
    checks = {f"{label}: flags match the channel table": m["flags"] == m["expected"]
              for label, m in per.items()}
    table = _table(["arm", "multiplier", "excess_var", "gap", "M>1", "common>0", "hyst>0"], rows)
    summary = {k: {**v, "flags": list(v["flags"]), "expected": list(v["expected"])} for k, v in per.items()}
    return ExperimentReport("ablation", cells, summary, checks, table + "\n" + _check_table(checks))


# ---------------------------------------------------------------- calm before storm

def _calm_job(label, params, seed, k):
    res = simulate(_config(params, seed, k))
    rec = record_from_sim(res)
    extra = {"tail_ratio": math.nan}
    if not res.unstable:
        extra["tail_ratio"] = mt.tail_vol_ratio(res.r, res.eta_t, 0.99)
    return SweepCell({"config": label, "phi": params.phi, "rho": params.rho, "beta": params.beta},
                     k, rec, res.unstable, extra)


def run_calm_storm(spec):
    o = spec.options
    lo = spec.base.replace(phi=o.get("phi_lo", 0.1), rho=o.get("rho_lo", 0.3))
    hi = spec.base.replace(phi=o.get("phi_hi", 0.9), rho=o.get("rho_hi", 0.7))
    pairs = [("diversified", lo), ("monoculture", hi)]
    if o.get("beta_zero", True):
        pairs += [("diversified_beta0", lo.replace(beta=0.0)), ("monoculture_beta0", hi.replace(beta=0.0))]
    jobs = [(lab, p, spec.master_seed, k) for lab, p in pairs for k in range(spec.seeds)]
    cells = _run_parallel(_calm_job, jobs, spec.jobs)
    per, rows = {}, []
    for lab, _ in pairs:
        sel = [c for c in cells if c.point["config"] == lab]
        m = {"ann_vol": _median(c.record.ann_vol for c in sel),
             "cte99": _median(c.record.cte99 for c in sel),
             "tail_ratio": _median(c.extra["tail_ratio"] for c in sel)}
        per[lab] = m
        rows.append([lab] + list(m.values()))
    d, m = per["diversified"], per["monoculture"]
    checks = {
        "monoculture tail/unconditional ratio > diversified": m["tail_ratio"] > d["tail_ratio"],
        "monoculture CTE99 loss strictly higher": m["cte99"] < d["cte99"],
    }
    label, ok = check("monoculture vol / diversified vol", "calm-storm.vol_ratio",
                      m["ann_vol"] / d["ann_vol"])
    checks[label] = ok
    if "diversified_beta0" in per:
        # channel off: each median should sit inside the other's 10-90% ensemble band
        qs = {}
        for lab in ("diversified_beta0", "monoculture_beta0"):
            vals = [c.extra["tail_ratio"] for c in cells if c.point["config"] == lab]
            qs[lab] = _quantiles(vals, (0.1, 0.9))
            per[lab]["tail_ratio_q10"], per[lab]["tail_ratio_q90"] = qs[lab]
        a, b = per["diversified_beta0"], per["monoculture_beta0"]
        checks["beta = 0: tail ratios indistinguishable (medians inside each other's 10-90% band)"] = (
            qs["monoculture_beta0"][0] <= a["tail_ratio"] <= qs["monoculture_beta0"][1]
            and qs["diversified_beta0"][0] <= b["tail_ratio"] <= qs["diversified_beta0"][1])
    table = _table(["config", "ann_vol", "cte99", "tail_ratio"], rows)
    return ExperimentReport("calm-storm", cells, per, checks, table + "\n" + _check_table(checks))


RUNNERS = {
    "calibration": run_calibration,
    "monoculture": run_monoculture,
    "tail-grid": run_tail_grid,
    "performative": run_performative,
    "interventions": run_interventions,
    "hysteresis": run_hysteresis,
    "ablation": run_ablation,
    "calm-storm": run_calm_storm,
}


def run_experiment(spec):
    return RUNNERS[spec.kind](spec)


def with_horizon(params, horizon):
    """'reduced' sets T = 1260, 'full' T = 5040."""
    if horizon not in ("reduced", "full"):
        raise ConfigError("horizon", f"must be 'reduced' or 'full', got {horizon!r}")
    return params.replace(n_periods=REDUCED_T if horizon == "reduced" else FULL_T)
