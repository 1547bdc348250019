"""Flow stepping: exact radial route, graph PDE route, class handling."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imcflab.ambient import euclidean, schwarzschild
from imcflab.flow import FlowConfig, run_flow, step_ode_rotsym, step_pde_graph
from imcflab.geometry import ClassViolationError, induced_geometry
from imcflab.grid import ScalarField, build_grid
from imcflab.sphharm import real_sph_harm


def test_ode_step_is_exponential():
    assert step_ode_rotsym(3.0, 0.2) == pytest.approx(3.0 * np.exp(0.1), rel=1e-15)


def test_ode_flow_exact_euclidean():
    cfg = FlowConfig(euclidean(), s0=1.0, t_final=1.0, n_out=11, record_iso=False)
    tr = run_flow(cfg)
    want = 4.0 * np.pi * np.exp(tr.times)
    assert np.abs(tr.series("area") / want - 1.0).max() < 1e-13
    assert np.abs(tr.rhos[-1] - np.exp(0.5)).max() < 1e-13


def test_ode_flow_exact_any_warp():
    # coordinate spheres move at speed s/2 regardless of the radial warp
    cfg = FlowConfig(schwarzschild(1.0), s0=3.0, t_final=2.0, n_out=9, record_iso=False)
    tr = run_flow(cfg)
    want = 4.0 * np.pi * 9.0 * np.exp(tr.times)
    assert np.abs(tr.series("area") / want - 1.0).max() < 1e-13


def test_pde_flow_tracks_closed_form():
    cfg = FlowConfig(
        euclidean(), s0=1.0, t_final=0.5, n_out=6, mode="pde", record_iso=False
    )
    tr = run_flow(cfg)
    want = 4.0 * np.pi * np.exp(tr.times)
    assert np.abs(tr.series("area") / want - 1.0).max() < 1e-5
    # a round start stays round
    assert np.ptp(tr.rhos[-1]) < 1e-6 * tr.rhos[-1].mean()


def test_pde_flow_perturbed_start_stays_accurate():
    grid = build_grid(16, 32)
    rho0 = 1.0 + 0.03 * real_sph_harm(2, 2, *grid.mesh)
    cfg = FlowConfig(
        euclidean(),
        s0=1.0,
        t_final=0.3,
        n_out=4,
        mode="pde",
        rho0=rho0,
        record_iso=False,
    )
    tr = run_flow(cfg)
    areas = tr.series("area")
    # exact exponential area growth holds for any IMCF surface
    assert np.abs(areas / (areas[0] * np.exp(tr.times)) - 1.0).max() < 1e-4


def test_phi_filter_does_not_change_resolved_dynamics():
    grid = build_grid(16, 32)
    rho0 = 1.0 + 0.03 * real_sph_harm(2, 2, *grid.mesh)
    base = dict(s0=1.0, t_final=0.2, n_out=3, mode="pde", rho0=rho0, record_iso=False)
    tr_on = run_flow(FlowConfig(euclidean(), phi_filter=True, **base))
    tr_off = run_flow(FlowConfig(euclidean(), phi_filter=False, **base))
    assert np.abs(tr_on.rhos[-1] - tr_off.rhos[-1]).max() < 1e-5


def test_step_pde_graph_round_trip():
    grid = build_grid(16, 32)
    st0 = induced_geometry(euclidean(), ScalarField(grid, np.full((16, 32), 2.0)))
    st1 = step_pde_graph(st0, euclidean(), 0.1)
    assert st1.t == pytest.approx(0.1)
    assert st1.area == pytest.approx(st0.area * np.exp(0.1), rel=1e-7)


def test_class_violation_raises_by_default():
    grid = build_grid(16, 32)
    rho0 = 1.0 + 0.3 * real_sph_harm(3, 0, *grid.mesh)  # H < 0 somewhere at t=0
    cfg = FlowConfig(
        euclidean(), s0=1.0, t_final=0.2, n_out=3, mode="pde", rho0=rho0, record_iso=False
    )
    with pytest.raises(ClassViolationError) as err:
        run_flow(cfg)
    assert err.value.node_count > 0


def test_class_violation_truncates_on_request():
    grid = build_grid(16, 32)
    rho0 = 1.0 + 0.3 * real_sph_harm(3, 0, *grid.mesh)
    cfg = FlowConfig(
        euclidean(),
        s0=1.0,
        t_final=0.2,
        n_out=3,
        mode="pde",
        rho0=rho0,
        record_iso=False,
        on_class_violation="truncate",
    )
    tr = run_flow(cfg)
    assert tr.aborted
    assert tr.n_recorded < 3
    assert tr.violations and tr.violations[0][1] > 0


def test_snapshot_stride_keeps_endpoints():
    cfg = FlowConfig(
        euclidean(), s0=1.0, t_final=0.4, n_out=5, snapshot_stride=2, record_iso=False
    )
    tr = run_flow(cfg)
    assert set(tr.states) == {0, 2, 4}
    # state() rebuilds missing indices on demand
    assert tr.state(1).area == pytest.approx(4.0 * np.pi * np.exp(0.1), rel=1e-12)


def test_trace_frame_state_consistent():
    cfg = FlowConfig(euclidean(), s0=2.0, t_final=0.5, n_out=3, record_iso=False)
    tr = run_flow(cfg)
    assert tr.frame(2).area == pytest.approx(tr.state(2).area, rel=1e-14)
    assert tr.dt_out == pytest.approx(0.25)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(euclidean(), s0=1.0, t_final=1.0, mode="imaginary")
    with pytest.raises(ValueError):
        FlowConfig(euclidean(), s0=1.0, t_final=1.0, n_out=1)
    with pytest.raises(ValueError):
        FlowConfig(euclidean(), s0=1.0, t_final=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(euclidean(), s0=1.0, t_final=1.0, rho0=np.ones((16, 32)))
    with pytest.raises(ValueError):
        FlowConfig(euclidean(), s0=1.0, t_final=1.0, on_class_violation="ignore")


def test_rho0_shape_checked():
    cfg = FlowConfig(
        euclidean(), s0=1.0, t_final=0.1, n_out=2, mode="pde", rho0=np.ones((4, 4))
    )
    with pytest.raises(ValueError):
        run_flow(cfg)


@settings(max_examples=8)
@given(
    st.floats(min_value=0.5, max_value=4.0, allow_nan=False),
    st.floats(min_value=0.2, max_value=2.0, allow_nan=False),
)
def test_ode_area_law_property(s0, t_final):
    cfg = FlowConfig(euclidean(), s0=s0, t_final=t_final, n_out=4, record_iso=False)
    tr = run_flow(cfg)
    areas = tr.series("area")
    assert np.abs(areas / (4.0 * np.pi * s0**2 * np.exp(tr.times)) - 1.0).max() < 1e-12


@settings(max_examples=6)
@given(st.floats(min_value=2.5, max_value=6.0, allow_nan=False))
def test_ode_bounds_track_curvature_range(s0):
    # H(s) = (2/s) sqrt(1 - 2m/s) peaks at s = 3m, so compare against the
    # closed form at the sampled radii rather than assuming monotonicity
    m = 1.0
    cfg = FlowConfig(schwarzschild(m), s0=s0, t_final=1.0, n_out=5, record_iso=False)
    tr = run_flow(cfg)
    radii = s0 * np.exp(0.5 * tr.times)
    h = (2.0 / radii) * np.sqrt(1.0 - 2.0 * m / radii)
    assert tr.bounds.h_max == pytest.approx(h.max(), rel=1e-12)
    assert tr.bounds.h_min == pytest.approx(h.min(), rel=1e-12)
