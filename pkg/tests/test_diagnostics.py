"""Surface diagnostics: masses, rate identities, eigenvalues, bands."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imcflab.ambient import euclidean, schwarzschild
from imcflab.diagnostics import (
    CSV_COLUMNS,
    BumpHarmonic,
    avg_H2_targets,
    integral_limits_report,
    rate_balance_report,
    dt_int_H2_identity,
    h_concentration,
    hawking_mass,
    in1_upper_bound,
    iso_band_check,
    lambda1_neumann,
    length_band_check,
    poincare_check,
    sandwich_check,
    state_record,
    weak_ricci_identity,
)
from imcflab.flow import FlowConfig, run_flow
from imcflab.geometry import graph_frame
from imcflab.grid import ScalarField, build_grid
from imcflab.sphharm import real_sph_harm


def _round_frame(grid, r, ambient=None):
    amb = euclidean() if ambient is None else ambient
    return graph_frame(amb, ScalarField(grid, np.full((grid.n_theta, grid.n_phi), r)))


@pytest.fixture(scope="module")
def euclid_trace():
    cfg = FlowConfig(euclidean(), s0=1.0, t_final=1.0, n_out=81, record_iso=False)
    return run_flow(cfg)


@pytest.fixture(scope="module")
def schwarz_trace():
    cfg = FlowConfig(schwarzschild(1.0), s0=3.0, t_final=1.0, n_out=21, record_iso=False)
    return run_flow(cfg)


def test_hawking_mass_closed_forms(grid16):
    # coordinate spheres carry exactly the slice mass; flat spheres carry zero
    fr = _round_frame(grid16, 3.0, schwarzschild(0.7))
    assert hawking_mass(fr) == pytest.approx(0.7, abs=1e-12)
    assert abs(hawking_mass(_round_frame(grid16, 2.0))) < 1e-13


def test_hawking_mass_accepts_states(grid16, schwarz_trace):
    k = 5
    assert hawking_mass(schwarz_trace.state(k)) == pytest.approx(
        hawking_mass(schwarz_trace.frame(k)), abs=1e-13
    )


def test_avg_h2_targets():
    t = np.array([0.0, 1.0])
    base = avg_H2_targets(t, r0=2.0, scenario="pmt")
    assert base[0] == pytest.approx(1.0)
    assert base[1] == pytest.approx(np.exp(-1.0))
    rpi = avg_H2_targets(t, r0=2.0, m=0.5, scenario="rpi")
    assert rpi[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        avg_H2_targets(t, r0=2.0, scenario="other")


def test_mass_constant_along_schwarzschild(schwarz_trace):
    m_h = schwarz_trace.series("m_H")
    assert np.abs(m_h - 1.0).max() < 1e-12
    rates = schwarz_trace.series("geroch_rate")[1:-1]
    assert np.abs(rates).max() < 1e-10


def test_rate_identity_links_series(euclid_trace, schwarz_trace):
    # flat: int H^2 = 16 pi at every time, both sides vanish identically
    lhs, rhs = dt_int_H2_identity(euclid_trace, 40)
    assert abs(lhs) < 1e-10 and abs(rhs) < 1e-10
    # curved: sides agree to the centered-difference truncation error
    lhs, rhs = dt_int_H2_identity(schwarz_trace, 10)
    assert lhs == pytest.approx(rhs, abs=5e-3)


def test_rate_identity_needs_interior_index(schwarz_trace):
    with pytest.raises(IndexError):
        dt_int_H2_identity(schwarz_trace, 0)
    with pytest.raises(IndexError):
        dt_int_H2_identity(schwarz_trace, len(schwarz_trace.records) - 1)


def test_rate_balance_report_flat(euclid_trace):
    rep = rate_balance_report(euclid_trace)
    assert np.abs(rep.residuals).max() < 1e-10
    # the sharp variant is 4 pi (2 - chi) = 0 on spheres
    assert np.abs(rep.slack_half).max() < 1e-10
    assert rep.integrated_slack > -1e-12


def test_rate_balance_full_variant_has_margin(schwarz_trace):
    rep = rate_balance_report(schwarz_trace)
    # dropping the 1/2 adds 8 pi - int H^2 / 2 > 0 off the flat model
    assert (rep.slack_full - rep.slack_half).min() > 1.0
    assert rep.integrated_slack > -1e-12


def test_integral_limits_exact_on_model(schwarz_trace):
    rep = integral_limits_report(schwarz_trace, scenario="rpi", m=1.0)
    assert rep.worst < 1e-12
    with pytest.raises(ValueError):
        integral_limits_report(schwarz_trace, scenario="other")


def test_integral_limits_pmt_zeroes_mass(euclid_trace):
    rep = integral_limits_report(euclid_trace, scenario="pmt", m=123.0)
    assert rep.worst < 1e-12
    assert np.abs(rep.targets["int_Rc"]).max() == 0.0


def test_lambda1_round_value(grid16):
    # first nonzero Neumann eigenvalue of the round r-sphere is 2/r^2
    assert lambda1_neumann(_round_frame(grid16, 2.0)) == pytest.approx(0.5, rel=2e-3)


def test_lambda1_scales_inverse_square(grid16):
    l2 = lambda1_neumann(_round_frame(grid16, 2.0))
    l5 = lambda1_neumann(_round_frame(grid16, 5.0))
    assert l2 * 4.0 == pytest.approx(l5 * 25.0, rel=1e-12)


def test_in1_equator_exact(grid16):
    # the equator splits the round r-sphere into equal caps: 2 pi r / (2 pi r^2)
    assert in1_upper_bound(_round_frame(grid16, 2.0)) == pytest.approx(0.5, rel=1e-9)


def test_poincare_round(grid16):
    rep = poincare_check(_round_frame(grid16, 1.0))
    assert rep.lambda1 == pytest.approx(2.0, rel=2e-3)
    assert rep.in1_upper == pytest.approx(1.0, rel=1e-9)
    assert rep.cheeger_bound == pytest.approx(rep.in1_upper**2 / 4.0)
    assert rep.cheeger_ok


def test_poincare_state_needs_ambient(euclid_trace):
    with pytest.raises(ValueError):
        poincare_check(euclid_trace.state(0))
    rep = poincare_check(euclid_trace.state(0), ambient=euclidean())
    assert rep.cheeger_ok


def test_h_concentration(grid16):
    assert h_concentration(_round_frame(grid16, 2.0)) < 1e-20
    bumpy = graph_frame(
        euclidean(), ScalarField(grid16, 2.0 * (1.0 + 0.05 * real_sph_harm(2, 1, *grid16.mesh)))
    )
    assert h_concentration(bumpy) > 1e-3


def test_weak_ricci_flat_cancels(euclid_trace):
    for a, b, l, m in [(0.2, 0.8, 0, 0), (0.1, 0.9, 2, 0)]:
        rep = weak_ricci_identity(euclid_trace, BumpHarmonic(a, b, l, m))
        assert abs(rep.residual) < 1e-12
        assert abs(rep.lhs) < 1e-12  # flat ambient: Rc = 0
        assert abs(rep.drift_term) < 1e-14  # radial flow has no tangential drift


def test_weak_ricci_window_validation(euclid_trace):
    with pytest.raises(ValueError):
        weak_ricci_identity(euclid_trace, BumpHarmonic(0.5, 1.5))  # beyond recorded T
    with pytest.raises(ValueError):
        # forced window ends where the bump is still nonzero
        weak_ricci_identity(euclid_trace, BumpHarmonic(0.0, 1.0), a=0.25, b=0.75)


def test_length_bands_flat(euclid_trace):
    reports = length_band_check(euclid_trace)
    assert len(reports) == euclid_trace.grid.n_theta + euclid_trace.grid.n_phi // 2
    assert all(r.ok for r in reports)


def test_iso_band_flat(euclid_trace):
    rep = iso_band_check(euclid_trace)
    assert rep.ok
    # round flow shrinks IN like e^{-t/2}; strictly inside the +-rate band
    assert np.abs(rep.values / (rep.values[0] * np.exp(-0.5 * rep.times)) - 1.0).max() < 1e-6


def test_sandwich_flat_exact(euclid_trace):
    rep = sandwich_check(euclid_trace)
    assert rep.ok
    assert rep.worst_lower > -1e-12
    assert rep.worst_upper > -1e-12


def test_state_record_flags(grid16):
    fr = _round_frame(grid16, 1.0)
    rec = state_record(fr, 0.0, compute_iso=False, compute_eigen=False)
    assert np.isnan(rec.in1_upper) and np.isnan(rec.lambda1_neumann)
    rec = state_record(fr, 0.0, compute_iso=True, compute_eigen=True)
    assert rec.in1_upper == pytest.approx(1.0, rel=1e-9)
    assert rec.lambda1_neumann == pytest.approx(2.0, rel=2e-3)
    assert rec.chi == pytest.approx(2.0, abs=1e-10)
    assert len(rec.to_row()) == len(CSV_COLUMNS)


@settings(max_examples=10)
@given(st.floats(min_value=0.1, max_value=0.9, allow_nan=False))
def test_hawking_mass_interpolates_radius(m_frac):
    # m_H of the coordinate sphere equals the slice mass at any radius
    grid = build_grid(8, 16)
    m = 1.0
    s = 2.0 * m / m_frac  # radius where 2m/s = m_frac < 1
    fr = graph_frame(schwarzschild(m), ScalarField(grid, np.full((8, 16), s)))
    assert hawking_mass(fr) == pytest.approx(m, rel=1e-10)


@settings(max_examples=10)
@given(
    st.floats(min_value=0.8, max_value=3.0, allow_nan=False),
    st.floats(min_value=0.01, max_value=0.08, allow_nan=False),
)
def test_hawking_mass_nonpositive_in_flat_space(r0, amp):
    # Willmore: int H^2 >= 16 pi in euclidean space, so m_H <= 0
    grid = build_grid(16, 32)
    rho = r0 * (1.0 + amp * real_sph_harm(2, 1, *grid.mesh))
    fr = graph_frame(euclidean(), ScalarField(grid, rho))
    assert hawking_mass(fr) <= 1e-12
