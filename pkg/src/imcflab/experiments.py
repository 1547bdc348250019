"""Flow families, trend tables, and CSV emission.

The two stability scenarios shrink one smallness parameter by factors of two
and watch the spacetime-chain distance fall with it:

* pmt_stability: Schwarzschild ambients with masses m0/2^i, flow from a
  coordinate sphere, distance |hat g - delta|^2 against the flat model.
* rpi_stability: one Schwarzschild ambient, initial spheres displaced by
  eps_i Y_lm with eps_i = eps0/2^i, distance |hat g - g_s|^2 against the
  Schwarzschild model, plus the mean-curvature concentration at mid-run.

single_run drives one flow and writes its full per-time diagnostics table.
Family members run in a process pool (jobs > 1) with one CSV per member;
aggregation and the trend verdict stay single-threaded.  All files start
with a schema-version comment line so downstream readers can pin layouts.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ambient import PerturbedAmbient, euclidean, schwarzschild
from .diagnostics import (
    CSV_COLUMNS,
    BumpHarmonic,
    rate_balance_report,
    integral_limits_report,
    dt_int_H2_identity,
    h_concentration,
    in1_upper_bound,
    iso_band_check,
    lambda1_neumann,
    length_band_check,
    poincare_check,
    sandwich_check,
    weak_ricci_identity,
)
from .flow import FlowConfig, FlowTrace, run_flow
from .grid import build_grid
from .metric_chain import chain_report, roundness_deficit
from .sphharm import real_sph_harm

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "RunSummary",
    "build_ambient",
    "identity_suite",
    "run_experiment",
    "run_single",
    "write_run_csv",
    "write_summary_csv",
]

RUN_SCHEMA = "imcflab.run.v1"
SUMMARY_SCHEMA = "imcflab.summary.v1"
SCENARIOS = ("pmt_stability", "rpi_stability", "single_run")
AMBIENT_KINDS = ("euclidean", "schwarzschild", "perturbed_euclidean", "perturbed_schwarzschild")

# horizon clearance demanded of every Schwarzschild start radius
_MASS_MARGIN = 1.05


def build_ambient(
    kind: str,
    mass: float = 0.0,
    eps: float = 0.0,
    l: int = 2,
    m: int = 0,
    r_in: float = 0.0,
    r_out: float = 0.0,
):
    """Ambient factory over plain parameters (picklable across the pool)."""
    if kind == "euclidean":
        return euclidean()
    if kind == "schwarzschild":
        return schwarzschild(mass)
    if kind in ("perturbed_euclidean", "perturbed_schwarzschild"):
        base = euclidean() if kind == "perturbed_euclidean" else schwarzschild(mass)
        return PerturbedAmbient(base=base, eps=eps, l=l, m=m, r_in=r_in, r_out=r_out)
    raise ValueError(f"unknown ambient kind {kind!r}")


@dataclass
class ExperimentConfig:
    """One experiment: scenario, ambient family, flow knobs, output paths."""

    scenario: str = "single_run"
    out_dir: str = "out"
    jobs: int = 1
    label: str = ""
    # ambient
    ambient_kind: str = "schwarzschild"
    mass: float = 0.1
    ambient_eps: float = 0.0
    ambient_l: int = 2
    ambient_m: int = 0
    r_in: float = 0.0
    r_out: float = 0.0
    # flow
    s0: float = 1.0
    t_final: float = 1.0
    n_out: int = 21
    mode: str = "ode"
    n_theta: int = 16
    n_phi: int = 32
    max_rel_move: float = 0.01
    cfl_safety: float = 0.5
    # family schedule: parameter_i = family_base / 2^i, i = 1..family_count
    family_count: int = 5
    family_base: float = 0.1
    family_l: int = 2
    family_m: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.ambient_kind not in AMBIENT_KINDS:
            raise ValueError(f"ambient_kind must be one of {AMBIENT_KINDS}")
        if self.mode not in ("ode", "pde"):
            raise ValueError("mode must be 'ode' or 'pde'")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.scenario != "single_run" and self.family_count < 3:
            raise ValueError("stability trends need at least three family members")
        if self.scenario == "pmt_stability":
            largest = self.family_base / 2.0
            if self.s0 <= 2.0 * largest * _MASS_MARGIN:
                raise ValueError("start radius must clear the largest family horizon")
        if self.scenario == "rpi_stability":
            if self.mode != "pde":
                raise ValueError("rpi_stability displaces the start sphere; use pde mode")
            if self.s0 <= 2.0 * self.mass * _MASS_MARGIN:
                raise ValueError("start radius must clear the horizon")
            if not 0.0 < self.family_base < 0.5:
                raise ValueError("perturbation base amplitude must sit in (0, 0.5)")
        if self.ambient_kind.startswith("perturbed") and self.r_out <= self.r_in:
            raise ValueError("perturbed ambients need r_out > r_in")

    def member_params(self) -> list:
        """Family schedule; one (index, value) pair per member."""
        if self.scenario == "single_run":
            return [(0, self.mass)]
        return [(i, self.family_base / 2.0**i) for i in range(1, self.family_count + 1)]


@dataclass
class RunSummary:
    """One flow reduced to the numbers the trend tables and gates consume."""

    index: int
    label: str
    param: float
    final_m_h: float = math.nan
    area_relerr: float = math.nan
    geroch_min: float = math.nan
    residual_max: float = math.nan  # rate-identity residual over interior times
    integrated_slack: float = math.nan
    d_total: float = math.nan
    d_hat_g1: float = math.nan
    d_g1_g2: float = math.nan
    d_g2_g3: float = math.nan
    triangle_ok: bool = False
    roundness_max: float = math.nan
    h_conc_mid: float = math.nan
    h_min: float = math.nan
    h_max: float = math.nan
    a_max: float = math.nan
    sandwich_ok: bool = False
    bands_ok: bool = False
    passed: bool = False
    notes: list = field(default_factory=list)

    @staticmethod
    def csv_header() -> tuple:
        skip = ("notes",)
        return tuple(f.name for f in fields(RunSummary) if f.name not in skip) + ("notes",)

    def to_row(self) -> tuple:
        vals = []
        for f in fields(self):
            if f.name == "notes":
                continue
            v = getattr(self, f.name)
            vals.append(v)
        return tuple(vals) + ("; ".join(self.notes),)


@dataclass
class ExperimentReport:
    """Family verdict: member summaries plus the trend checks."""

    scenario: str
    summaries: list
    trend_ok: bool
    decay_ratio: float  # last distance over first, nan for single runs
    passed: bool
    lines: list = field(default_factory=list)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def write_run_csv(path, trace: FlowTrace) -> None:
    """Per-time diagnostics table, one quantity per column, one time per row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {RUN_SCHEMA}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in trace.records:
            fh.write(",".join(_fmt(v) for v in rec.to_row()) + "\n")


def write_summary_csv(path, summaries: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {SUMMARY_SCHEMA}\n")
        fh.write(",".join(RunSummary.csv_header()) + "\n")
        for s in summaries:
            fh.write(",".join(_fmt(v) for v in s.to_row()) + "\n")


def _flow_config(cfg: ExperimentConfig, index: int, value: float) -> FlowConfig:
    if cfg.scenario == "pmt_stability":
        ambient = build_ambient("schwarzschild", mass=value)
        rho0 = None
    elif cfg.scenario == "rpi_stability":
        ambient = build_ambient(
            cfg.ambient_kind,
            mass=cfg.mass,
            eps=cfg.ambient_eps,
            l=cfg.ambient_l,
            m=cfg.ambient_m,
            r_in=cfg.r_in,
            r_out=cfg.r_out,
        )
        grid = build_grid(cfg.n_theta, cfg.n_phi)
        tt, pp = grid.mesh
        rho0 = cfg.s0 * (1.0 + value * real_sph_harm(cfg.family_l, cfg.family_m, tt, pp))
    else:
        ambient = build_ambient(
            cfg.ambient_kind,
            mass=cfg.mass,
            eps=cfg.ambient_eps,
            l=cfg.ambient_l,
            m=cfg.ambient_m,
            r_in=cfg.r_in,
            r_out=cfg.r_out,
        )
        rho0 = None
    return FlowConfig(
        ambient=ambient,
        s0=cfg.s0,
        t_final=cfg.t_final,
        n_out=cfg.n_out,
        mode=cfg.mode if cfg.scenario != "rpi_stability" else "pde",
        n_theta=cfg.n_theta,
        n_phi=cfg.n_phi,
        rho0=rho0,
        max_rel_move=cfg.max_rel_move,
        cfl_safety=cfg.cfl_safety,
        on_class_violation="truncate",
    )


def _mass_for_chain(cfg: ExperimentConfig, value: float) -> float:
    if cfg.scenario == "pmt_stability":
        return value
    if cfg.ambient_kind in ("euclidean", "perturbed_euclidean"):
        return 0.0
    return cfg.mass


def _chain_scenario(cfg: ExperimentConfig) -> str:
    if cfg.scenario == "pmt_stability":
        return "pmt"
    if cfg.scenario == "rpi_stability":
        return "rpi"
    return "pmt" if cfg.ambient_kind in ("euclidean", "perturbed_euclidean") else "rpi"


def run_single(cfg: ExperimentConfig, index: int, value: float, csv_path=None) -> RunSummary:
    """One member: flow, diagnostics CSV, and the reduced summary."""
    label = f"{cfg.scenario}_{index:02d}"
    summary = RunSummary(index=index, label=label, param=value)
    trace = run_flow(_flow_config(cfg, index, value))
    if csv_path is not None:
        write_run_csv(csv_path, trace)
    if trace.aborted:
        summary.notes.append("class violation truncated the run")
        return summary

    times = np.asarray(trace.times)
    areas = trace.series("area")
    summary.final_m_h = float(trace.records[-1].m_H)
    summary.area_relerr = float(np.max(np.abs(areas / (areas[0] * np.exp(times)) - 1.0)))
    rates = trace.series("geroch_rate")
    summary.geroch_min = float(np.nanmin(rates)) if len(rates) > 2 else math.nan
    summary.h_min = trace.bounds.h_min
    summary.h_max = trace.bounds.h_max
    summary.a_max = trace.bounds.a_max

    balance = rate_balance_report(trace)
    summary.residual_max = float(np.max(np.abs(balance.residuals)))
    summary.integrated_slack = balance.integrated_slack

    chain = chain_report(trace, m=_mass_for_chain(cfg, value), scenario=_chain_scenario(cfg))
    summary.d_total = chain.d_total
    summary.d_hat_g1, summary.d_g1_g2, summary.d_g2_g3 = chain.pairwise
    summary.triangle_ok = chain.triangle_ok
    summary.roundness_max = float(np.max(roundness_deficit(trace)))

    k_mid = int(np.argmin(np.abs(times - 0.5 * cfg.t_final)))
    summary.h_conc_mid = h_concentration(trace.state(k_mid))

    summary.sandwich_ok = sandwich_check(trace).ok
    bands = length_band_check(trace)
    iso = iso_band_check(trace)
    summary.bands_ok = bool(all(b.ok for b in bands) and iso.ok)

    area_tol = 1e-8 if trace.config.mode == "ode" else 1e-4
    gates = {
        "area law": summary.area_relerr <= area_tol,
        "integrated slack": summary.integrated_slack >= -1e-6,
        "triangle": summary.triangle_ok,
        "sandwich": summary.sandwich_ok,
        "growth bands": summary.bands_ok,
    }
    for name, ok in gates.items():
        if not ok:
            summary.notes.append(f"{name} gate failed")
    summary.passed = all(gates.values())
    return summary


def _member_job(payload: tuple) -> RunSummary:
    cfg_kwargs, index, value, csv_path = payload
    return run_single(ExperimentConfig(**cfg_kwargs), index, value, csv_path)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """All members, the trend verdict, and the on-disk report."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_kwargs = {f.name: getattr(cfg, f.name) for f in fields(cfg)}

    jobs = []
    for index, value in cfg.member_params():
        csv_path = out_dir / f"run_{index:02d}.csv"
        jobs.append((cfg_kwargs, index, value, str(csv_path)))

    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            summaries = list(pool.map(_member_job, jobs))
    else:
        summaries = [_member_job(j) for j in jobs]

    trend_ok, decay_ratio, trend_lines = _trend_verdict(cfg, summaries)
    passed = trend_ok and all(s.passed for s in summaries)

    write_summary_csv(out_dir / "summary.csv", summaries)
    lines = _report_lines(cfg, summaries, trend_lines, decay_ratio, passed)
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return ExperimentReport(
        scenario=cfg.scenario,
        summaries=summaries,
        trend_ok=trend_ok,
        decay_ratio=decay_ratio,
        passed=passed,
        lines=lines,
    )


def _trend_verdict(cfg: ExperimentConfig, summaries: list):
    if cfg.scenario == "single_run" or len(summaries) < 2:
        return (bool(summaries and summaries[0].passed), math.nan, [])
    lines = []
    d = np.array([s.d_total for s in summaries])
    ok = bool(np.all(np.isfinite(d)) and np.all(np.diff(d) < 0.0))
    lines.append(f"distance trend {'decreasing' if ok else 'NOT monotone'}: "
                 + " > ".join(_fmt(v) for v in d))
    ratio = float(d[-1] / d[0]) if d[0] > 0 else math.nan
    if cfg.scenario == "rpi_stability":
        h = np.array([s.h_conc_mid for s in summaries])
        h_ok = bool(np.all(np.isfinite(h)) and np.all(np.diff(h) < 0.0))
        lines.append(f"mid-run H-concentration trend {'decreasing' if h_ok else 'NOT monotone'}: "
                     + " > ".join(_fmt(v) for v in h))
        ok = ok and h_ok
    return ok, ratio, lines


def _rate_link_residual_max(trace: FlowTrace) -> float:
    vals = [abs(np.subtract(*dt_int_H2_identity(trace, k))) for k in range(1, len(trace.records) - 1)]
    return float(max(vals))


def identity_suite(out_path=None) -> tuple:
    """Built-in verification battery; returns (lines, all_ok).

    Exercises every identity and bound on a small set of canonical runs:
    exact radial references in flat and Schwarzschild space, a round start
    evolved through the graph stepper, and a perturbed Schwarzschild start.
    Line format is one check per line, 'ok'/'FAIL' first.
    """
    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))

    def area_relerr(trace):
        areas = trace.series("area")
        t = np.asarray(trace.times)
        return float(np.max(np.abs(areas / (areas[0] * np.exp(t)) - 1.0)))

    # flat radial reference: every rate is constant, identities exact
    tr = run_flow(FlowConfig(ambient=euclidean(), s0=1.0, t_final=1.0, n_out=21, mode="ode"))
    check("flat ode area law", area_relerr(tr) <= 1e-8, f"relerr={area_relerr(tr):.2e}")
    mh = np.abs(tr.series("m_H"))
    check("flat ode vanishing mass", mh.max() <= 1e-10, f"|m_H|max={mh.max():.2e}")
    cr = rate_balance_report(tr)
    check("flat ode rate identity", np.max(np.abs(cr.residuals)) <= 1e-6,
          f"max={np.max(np.abs(cr.residuals)):.2e}")
    check("flat ode integrated slack", cr.integrated_slack >= -1e-6,
          f"slack={cr.integrated_slack:+.2e}")
    check("flat ode rate link", _rate_link_residual_max(tr) <= 1e-6,
          f"max={_rate_link_residual_max(tr):.2e}")
    sw = sandwich_check(tr)
    check("flat ode sandwich", sw.ok, f"lo={sw.worst_lower:+.2e} hi={sw.worst_upper:+.2e}")
    bands = length_band_check(tr)
    iso = iso_band_check(tr)
    check("flat ode growth bands", all(b.ok for b in bands) and iso.ok,
          f"len margin={min(b.margin for b in bands):+.2e} iso margin={iso.margin:+.2e}")
    chain = chain_report(tr, m=0.0, scenario="pmt")
    check("flat chain exactness", chain.d_total <= 1e-10, f"|hat g - delta|^2={chain.d_total:.2e}")
    fr0 = tr.frame(0)
    lam = lambda1_neumann(fr0)
    check("round sphere eigenvalue", abs(lam - 2.0) / 2.0 <= 1e-3, f"lambda1={lam:.6f}")
    equator = in1_upper_bound(fr0)
    check("equator candidate ratio", abs(equator - 1.0) <= 1e-6, f"IN={equator:.8f}")
    pc = poincare_check(fr0)
    check("eigenvalue Cheeger bound", pc.cheeger_ok,
          f"lambda1={pc.lambda1:.4f} >= {pc.cheeger_bound:.4f}")

    # Schwarzschild radial reference, coarse: oracle values and the chain
    tr = run_flow(FlowConfig(ambient=schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=21, mode="ode"))
    mh = tr.series("m_H")
    check("schwarzschild mass oracle", np.max(np.abs(mh - 1.0)) <= 1e-8,
          f"|m_H-1|max={np.max(np.abs(mh - 1.0)):.2e}")
    rate = tr.series("geroch_rate")
    check("geroch monotone", np.nanmin(rate) >= -1e-8, f"min rate={np.nanmin(rate):+.2e}")
    chain = chain_report(tr, m=1.0, scenario="rpi")
    check("schwarzschild chain exactness",
          chain.d_total <= 1e-8 and max(chain.pairwise) <= 1e-8,
          f"|hat g - g_s|^2={chain.d_total:.2e} pairwise max={max(chain.pairwise):.2e}")
    sw = sandwich_check(tr)
    check("schwarzschild ode sandwich", sw.ok,
          f"lo={sw.worst_lower:+.2e} hi={sw.worst_upper:+.2e}")

    # Schwarzschild radial reference, fine time axis: rate identities to 1e-6
    tr = run_flow(FlowConfig(ambient=schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=2001,
                             mode="ode", record_iso=False))
    cr = rate_balance_report(tr)
    check("schwarzschild rate identity", np.max(np.abs(cr.residuals)) <= 1e-6,
          f"max={np.max(np.abs(cr.residuals)):.2e}")
    check("schwarzschild rate link", _rate_link_residual_max(tr) <= 1e-6,
          f"max={_rate_link_residual_max(tr):.2e}")
    check("schwarzschild integrated slack", cr.integrated_slack >= -1e-6,
          f"slack={cr.integrated_slack:+.2e}")
    cor = integral_limits_report(tr, scenario="rpi", m=1.0)
    check("limit-integral targets", cor.worst <= 1e-6, f"worst relerr={cor.worst:.2e}")

    # weak Ricci identity on a moderately fine radial trace
    tr = run_flow(FlowConfig(ambient=schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=641,
                             mode="ode", record_iso=False))
    worst = 0.0
    for a, b, l, m in ((0.3, 1.7, 0, 0), (0.2, 1.2, 0, 0), (0.5, 1.9, 2, 0)):
        rep = weak_ricci_identity(tr, BumpHarmonic(a=a, b=b, l=l, m=m))
        worst = max(worst, rep.residual)
    check("weak Ricci identity (radial)", worst <= 1e-6, f"worst={worst:.2e}")

    # graph stepper, round start: the pde path against the closed form
    tr = run_flow(FlowConfig(ambient=euclidean(), s0=1.0, t_final=1.0, n_out=41,
                             mode="pde", n_theta=16, n_phi=32, record_iso=False))
    check("flat pde area law", area_relerr(tr) <= 1e-4, f"relerr={area_relerr(tr):.2e}")
    sw = sandwich_check(tr)
    check("flat pde sandwich", sw.ok, f"lo={sw.worst_lower:+.2e} hi={sw.worst_upper:+.2e}")

    # graph stepper, perturbed Schwarzschild start
    grid = build_grid(16, 32)
    tt, pp = grid.mesh
    rho0 = 1.0 + 0.01 * real_sph_harm(2, 0, tt, pp)
    tr = run_flow(FlowConfig(ambient=schwarzschild(0.1), s0=1.0, t_final=1.0, n_out=161,
                             mode="pde", n_theta=16, n_phi=32, rho0=rho0, record_iso=False))
    check("perturbed pde area law", area_relerr(tr) <= 1e-4, f"relerr={area_relerr(tr):.2e}")
    cr = rate_balance_report(tr)
    check("perturbed pde rate identity", np.max(np.abs(cr.residuals)) <= 1e-3,
          f"max={np.max(np.abs(cr.residuals)):.2e}")
    check("perturbed pde integrated slack", cr.integrated_slack >= -1e-6,
          f"slack={cr.integrated_slack:+.2e}")
    worst = 0.0
    for a, b, l, m in ((0.1, 0.9, 0, 0), (0.15, 0.95, 2, 0), (0.1, 1.0, 2, 2)):
        rep = weak_ricci_identity(tr, BumpHarmonic(a=a, b=b, l=l, m=m))
        worst = max(worst, rep.residual)
    check("weak Ricci identity (graph)", worst <= 1e-3, f"worst={worst:.2e}")
    sw = sandwich_check(tr)
    check("perturbed pde sandwich", sw.ok, f"lo={sw.worst_lower:+.2e} hi={sw.worst_upper:+.2e}")
    bands = length_band_check(tr)
    iso = iso_band_check(tr)
    check("perturbed pde growth bands", all(b.ok for b in bands) and iso.ok,
          f"len margin={min(b.margin for b in bands):+.2e} iso margin={iso.margin:+.2e}")

    all_ok = all(ok for _, ok, _ in checks)
    lines = [f"[{'ok' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in checks]
    lines.append(f"suite: {'PASS' if all_ok else 'FAIL'} ({sum(ok for _, ok, _ in checks)}"
                 f"/{len(checks)} checks)")
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return lines, all_ok


def _report_lines(cfg, summaries, trend_lines, decay_ratio, passed) -> list:
    lines = [
        f"experiment: {cfg.scenario}" + (f" [{cfg.label}]" if cfg.label else ""),
        f"members: {len(summaries)}  mode: {cfg.mode}  grid: {cfg.n_theta}x{cfg.n_phi}"
        f"  t_final: {cfg.t_final:g}",
    ]
    for s in summaries:
        verdict = "pass" if s.passed else "FAIL"
        lines.append(
            f"  [{verdict}] run {s.index:2d} param={s.param:.6g} m_H={s.final_m_h:.9g} "
            f"d_total={s.d_total:.6e} roundness={s.roundness_max:.3e}"
            + (f"  ({'; '.join(s.notes)})" if s.notes else "")
        )
    lines.extend(trend_lines)
    if not math.isnan(decay_ratio):
        lines.append(f"distance decay (last/first): {decay_ratio:.6e}")
    lines.append(f"experiment: {'PASS' if passed else 'FAIL'}")
    return lines
