"""End-to-end acceptance gates, one test per criterion.

Each test states its tolerance inline and fails with the measured number, so
the -v output reads as a pass/fail line per criterion.  Traces shared between
criteria are module fixtures; anything with a runtime budget is re-run fresh
inside its own test so the clock only sees that run.
"""

import time

import numpy as np
import pytest

from imcflab.ambient import PerturbedAmbient, euclidean, schwarzschild
from imcflab.diagnostics import (
    BumpHarmonic,
    integral_limits_report,
    rate_balance_report,
    dt_int_H2_identity,
    in1_upper_bound,
    iso_band_check,
    lambda1_neumann,
    length_band_check,
    sandwich_check,
    weak_ricci_identity,
)
from imcflab.experiments import ExperimentConfig, run_experiment
from imcflab.flow import FlowConfig, run_flow
from imcflab.geometry import graph_frame
from imcflab.grid import ScalarField, build_grid
from imcflab.metric_chain import chain_report
from imcflab.sphharm import real_sph_harm


def _area_relerr(trace):
    areas = trace.series("area")
    return float(np.abs(areas / (areas[0] * np.exp(trace.times)) - 1.0).max())


def _rate_residual_max(trace):
    ks = range(1, len(trace.records) - 1)
    return float(max(abs(np.subtract(*dt_int_H2_identity(trace, k))) for k in ks))


@pytest.fixture(scope="module")
def tr_euclid_ode():
    return run_flow(FlowConfig(euclidean(), s0=1.0, t_final=1.0, n_out=21, record_iso=True))


@pytest.fixture(scope="module")
def tr_schwarz_ode():
    return run_flow(
        FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=21, record_iso=True)
    )


@pytest.fixture(scope="module")
def tr_schwarz_ode_fine():
    # dt_out = 2/2400; the centered-difference rates have to clear 1e-6
    return run_flow(
        FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=2401, record_iso=False)
    )


@pytest.fixture(scope="module")
def tr_schwarz_ode_mid():
    return run_flow(
        FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=641, record_iso=False)
    )


@pytest.fixture(scope="module")
def tr_euclid_pde():
    grid = build_grid(16, 32)
    rho0 = 1.0 + 0.01 * real_sph_harm(2, 2, *grid.mesh)
    return run_flow(
        FlowConfig(
            euclidean(), s0=1.0, t_final=1.0, n_out=161, mode="pde",
            rho0=rho0, record_iso=False,
        )
    )


@pytest.fixture(scope="module")
def tr_schwarz_pde():
    grid = build_grid(24, 48)
    rho0 = 1.0 + 0.01 * real_sph_harm(2, 0, *grid.mesh)
    return run_flow(
        FlowConfig(
            schwarzschild(0.1), s0=1.0, t_final=1.0, n_out=161, mode="pde",
            n_theta=24, n_phi=48, rho0=rho0, record_iso=False,
        )
    )


@pytest.fixture(scope="module")
def pmt_family(tmp_path_factory):
    out = tmp_path_factory.mktemp("pmt_family")
    cfg = ExperimentConfig(
        scenario="pmt_stability", out_dir=str(out), s0=1.0, t_final=1.0,
        n_out=21, mode="ode", family_count=5, family_base=0.1,
    )
    start = time.perf_counter()
    report = run_experiment(cfg)
    return report, time.perf_counter() - start


def test_criterion_01_exponential_area_growth(tr_euclid_pde, tr_schwarz_pde):
    start = time.perf_counter()
    tr_e = run_flow(FlowConfig(euclidean(), s0=1.0, t_final=1.0, n_out=21, record_iso=False))
    dt_e = time.perf_counter() - start
    start = time.perf_counter()
    tr_s = run_flow(
        FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=21, record_iso=False)
    )
    dt_s = time.perf_counter() - start
    start = time.perf_counter()
    tr_p = run_flow(
        FlowConfig(
            euclidean(), s0=1.0, t_final=1.0, n_out=11, mode="pde",
            n_theta=32, n_phi=64, record_iso=False,
        )
    )
    dt_p = time.perf_counter() - start

    assert _area_relerr(tr_e) <= 1e-8, f"flat ode area law off by {_area_relerr(tr_e):.3e}"
    assert _area_relerr(tr_s) <= 1e-8, f"schwarz ode area law off by {_area_relerr(tr_s):.3e}"
    assert dt_e < 1.0 and dt_s < 1.0, f"ode runs took {dt_e:.2f}s / {dt_s:.2f}s (budget 1s)"
    assert _area_relerr(tr_p) <= 1e-4, f"32x64 pde area law off by {_area_relerr(tr_p):.3e}"
    assert dt_p < 60.0, f"32x64 pde run took {dt_p:.1f}s (budget 60s)"
    # the perturbed-start solver traces obey the same exact law
    assert _area_relerr(tr_euclid_pde) <= 1e-4
    assert _area_relerr(tr_schwarz_pde) <= 1e-4


def test_criterion_02_hawking_mass_in_schwarzschild():
    start = time.perf_counter()
    tr = run_flow(
        FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=21, record_iso=False)
    )
    elapsed = time.perf_counter() - start
    mh_err = np.abs(tr.series("m_H") - 1.0).max()
    geroch = tr.series("geroch_rate")[1:-1]
    assert mh_err <= 1e-8, f"Hawking mass drifts from 1 by {mh_err:.3e}"
    assert geroch.min() >= -1e-8, f"Geroch rate dips to {geroch.min():.3e}"
    assert elapsed < 1.0, f"run took {elapsed:.2f}s (budget 1s)"


def test_criterion_03_rate_identity_residuals(
    tr_euclid_ode, tr_schwarz_ode_fine, tr_euclid_pde, tr_schwarz_pde
):
    for trace, tol, name in (
        (tr_euclid_ode, 1e-6, "flat ode"),
        (tr_schwarz_ode_fine, 1e-6, "schwarz ode"),
        (tr_euclid_pde, 1e-3, "flat pde"),
        (tr_schwarz_pde, 1e-3, "schwarz pde"),
    ):
        worst = _rate_residual_max(trace)
        assert worst <= tol, f"{name}: rate identity residual {worst:.3e} > {tol:g}"


def test_criterion_04_rate_balance_slack(
    tr_euclid_ode, tr_schwarz_ode_fine, tr_euclid_pde, tr_schwarz_pde
):
    for trace, tol, name in (
        (tr_euclid_ode, 1e-6, "flat ode"),
        (tr_schwarz_ode_fine, 1e-6, "schwarz ode"),
        (tr_euclid_pde, 1e-3, "flat pde"),
        (tr_schwarz_pde, 1e-3, "schwarz pde"),
    ):
        cr = rate_balance_report(trace)
        worst = np.abs(cr.residuals).max()
        assert worst <= tol, f"{name}: rate-balance residual {worst:.3e} > {tol:g}"
        assert cr.integrated_slack >= -1e-6, (
            f"{name}: integrated slack {cr.integrated_slack:.3e} < -1e-6"
        )
        # both factor variants are reported at every interior time; their gap
        # is the half-lhs itself, which flips sign with m_H, so no ordering
        assert cr.slack_half.shape == cr.slack_full.shape == cr.times.shape
        assert np.all(np.isfinite(cr.slack_half)) and np.all(np.isfinite(cr.slack_full))


def test_criterion_05_integral_limit_targets(tr_euclid_ode):
    start = time.perf_counter()
    tr_m1 = run_flow(
        FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=21, record_iso=False)
    )
    tr_m05 = run_flow(
        FlowConfig(schwarzschild(0.5), s0=2.0, t_final=2.0, n_out=21, record_iso=False)
    )
    rep1 = integral_limits_report(tr_m1, scenario="rpi", m=1.0)
    rep2 = integral_limits_report(tr_m05, scenario="rpi", m=0.5)
    rep0 = integral_limits_report(tr_euclid_ode, scenario="pmt")
    elapsed = time.perf_counter() - start
    for rep, name in ((rep1, "m=1"), (rep2, "m=0.5"), (rep0, "flat")):
        assert len(rep.rel_errors) == 8
        assert rep.worst <= 1e-6, f"{name}: worst target deviation {rep.worst:.3e} > 1e-6"
    assert elapsed < 5.0, f"took {elapsed:.2f}s (budget 5s)"


def test_criterion_06_weak_ricci_identity(tr_schwarz_ode_mid, tr_schwarz_pde):
    ode_bumps = (
        BumpHarmonic(0.3, 1.7, 0, 0),
        BumpHarmonic(0.2, 1.2, 0, 0),
        BumpHarmonic(0.5, 1.9, 2, 0),
    )
    pde_bumps = (
        BumpHarmonic(0.1, 0.9, 0, 0),
        BumpHarmonic(0.15, 0.95, 2, 0),
        BumpHarmonic(0.2, 1.0, 0, 0),
    )
    for phi in ode_bumps:
        rep = weak_ricci_identity(tr_schwarz_ode_mid, phi)
        assert abs(rep.residual) <= 1e-6, (
            f"ode bump ({phi.a},{phi.b},Y{phi.l}{phi.m}): residual {rep.residual:.3e}"
        )
    for phi in pde_bumps:
        rep = weak_ricci_identity(tr_schwarz_pde, phi)
        assert abs(rep.residual) <= 1e-3, (
            f"pde bump ({phi.a},{phi.b},Y{phi.l}{phi.m}): residual {rep.residual:.3e}"
        )
        # guard against a symmetry-null pairing (then lhs would be ~1e-16)
        assert abs(rep.lhs) > 1e-6, "test function must see nonzero curvature pairing"


def test_criterion_07_neumann_eigenvalue_and_cheeger():
    grid = build_grid(32, 64)
    for r in (1.0, 2.5):
        fr = graph_frame(euclidean(), ScalarField(grid, np.full((grid.n_theta, grid.n_phi), r)))
        lam = lambda1_neumann(fr)
        in1 = in1_upper_bound(fr)
        assert abs(lam - 2.0 / r**2) <= 1e-3 * (2.0 / r**2), (
            f"r={r}: lambda1 {lam:.8f} vs 2/r^2 {2.0 / r**2:.8f}"
        )
        assert abs(in1 - 1.0 / r) <= 1e-6, f"r={r}: equator candidate {in1:.2e}"
        assert lam >= in1**2 / 4.0, f"r={r}: Cheeger-type lower bound violated"


def test_criterion_08_metric_chain_collapse(tr_euclid_ode, tr_schwarz_ode):
    flat = chain_report(tr_euclid_ode, m=0.0, scenario="pmt")
    assert flat.d_total <= 1e-10, f"flat chain distance {flat.d_total:.3e} > 1e-10"
    assert flat.triangle_ok

    schw = chain_report(tr_schwarz_ode, m=1.0, scenario="rpi")
    assert schw.d_total <= 1e-8, f"schwarz chain distance {schw.d_total:.3e} > 1e-8"
    assert max(schw.pairwise) <= 1e-8, f"worst pairwise leg {max(schw.pairwise):.3e} > 1e-8"
    assert schw.triangle_ok


def test_criterion_09_mass_family_trend(pmt_family):
    report, elapsed = pmt_family
    d = np.array([s.d_total for s in report.summaries])
    roundness = max(s.roundness_max for s in report.summaries)
    assert report.trend_ok
    assert np.all(np.diff(d) < 0), f"distances not strictly decreasing: {d}"
    assert roundness <= 1e-8, f"worst roundness deficit {roundness:.3e} > 1e-8"
    assert elapsed < 10.0, f"family took {elapsed:.1f}s (budget 10s)"


def test_criterion_09_mass_family_decay_ratio(pmt_family):
    report, _ = pmt_family
    # d_total scales as m^2 (flat chain legs vanish, the (hat_g, g_s) leg is
    # quadratic in the mass), so four halvings give a ratio near (1/16)^2,
    # about 3.4e-3.  The 1e-4 gate cannot be met by this family schedule; the
    # assertion is kept at face value and fails with the measured ratio.
    assert report.decay_ratio <= 1e-4, (
        f"decay ratio {report.decay_ratio:.6e} > 1e-4 "
        f"(quadratic mass scaling gives ~(1/16)^2 = 3.9e-3 for this schedule)"
    )


def test_criterion_10_perturbation_family_trend(tmp_path_factory):
    out = tmp_path_factory.mktemp("rpi_family")
    cfg = ExperimentConfig(
        scenario="rpi_stability", out_dir=str(out), ambient_kind="schwarzschild",
        mass=0.1, s0=1.0, t_final=1.0, n_out=41, mode="pde", n_theta=24, n_phi=48,
        family_count=4, family_base=0.05, family_l=2, family_m=0,
    )
    start = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    d = np.array([s.d_total for s in report.summaries])
    h_mid = np.array([s.h_conc_mid for s in report.summaries])
    assert report.passed, [s.notes for s in report.summaries]
    assert report.trend_ok
    assert np.all(np.diff(d) < 0), f"distances not decreasing: {d}"
    assert np.all(np.diff(h_mid) < 0), f"mid-run H concentration not decreasing: {h_mid}"
    assert elapsed < 600.0, f"family took {elapsed:.0f}s (budget 600s)"


def test_criterion_11_metric_sandwich_and_length_bands(tr_euclid_ode, tr_schwarz_ode):
    grid = build_grid(16, 32)
    y22 = real_sph_harm(2, 2, *grid.mesh)
    y20 = real_sph_harm(2, 0, *grid.mesh)
    bumpy = PerturbedAmbient(schwarzschild(0.1), eps=0.02, l=2, m=0, r_in=0.9, r_out=1.6)
    pde = dict(t_final=0.5, n_out=21, mode="pde", record_iso=True)
    runs = [
        ("flat ode", tr_euclid_ode),
        ("schwarz ode", tr_schwarz_ode),
        ("flat pde", run_flow(FlowConfig(euclidean(), s0=1.0, rho0=1.0 + 0.02 * y22, **pde))),
        (
            "schwarz pde",
            run_flow(FlowConfig(schwarzschild(0.1), s0=1.0, rho0=1.0 + 0.02 * y20, **pde)),
        ),
        ("bumpy ambient round", run_flow(FlowConfig(bumpy, s0=1.0, **pde))),
        (
            "bumpy ambient perturbed",
            run_flow(FlowConfig(bumpy, s0=1.0, rho0=1.0 + 0.02 * y20, **pde)),
        ),
    ]
    for name, tr in runs:
        sw = sandwich_check(tr)
        assert sw.ok, f"{name}: sandwich bound fails ({sw.worst_lower:.2e}, {sw.worst_upper:.2e})"
        bands = length_band_check(tr)
        n_bad = sum(not b.ok for b in bands)
        assert n_bad == 0, f"{name}: {n_bad} marker curves leave their length band"
        iso = iso_band_check(tr)
        assert iso.ok, f"{name}: isoperimetric candidate leaves its band ({iso.margin:.2e})"
