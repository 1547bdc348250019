"""Inverse mean curvature flow of radial graphs.

Two stepping routes share one geometry path:

* ode mode: rotationally symmetric ambient, coordinate-sphere initial data.
  IMCF reduces to ds/dt = s/2 regardless of the warp, so the step is the
  exact factor e^{dt/2} and the trace is a closed-form reference solution.
* pde mode: the graph equation d rho/dt = |dF|_G / H, advanced with Heun's
  method under a diffusive stability limit (the linearized speed has
  diffusion tensor g^{ab}/H^2) plus a cap on the relative node motion.
  Rows near the poles carry azimuthal wavenumbers far beyond what a smooth
  field on the sphere can hold there, and they would throttle the stable
  step through the g^{phi phi}/sin^2 factor; a per-row Fourier cutoff at
  m ~ sin(theta) n_phi/2 removes only those unresolvable modes and lets the
  step scale with the latitude spacing instead.

A trace stores the radial profile at every output time (fields are cheap)
and full states at a configurable stride (forms are not), along with the
running curvature extremes that the class-bound estimates are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ambient import AmbientMetric, RotSymAmbient
from .geometry import ClassViolationError, FlowState, GraphFrame, graph_frame, induced_geometry
from .grid import ScalarField, SphericalGrid, build_grid

__all__ = [
    "FlowConfig",
    "FlowTrace",
    "RunBounds",
    "step_ode_rotsym",
    "step_pde_graph",
    "run_flow",
]

# largest amplification of a 5-point fourth-order second-difference symbol
_D2_SYMBOL = 16.0 / 3.0
# polar filter: keep azimuthal modes up to _FILTER_MARGIN * sin(theta) * n_phi/2,
# never below _FILTER_M_FLOOR so every low-order harmonic survives at all rows
_FILTER_MARGIN = 1.2
_FILTER_M_FLOOR = 4


@dataclass
class FlowConfig:
    """Run description: ambient, initial data, duration, stepping knobs."""

    ambient: AmbientMetric
    s0: float
    t_final: float
    n_out: int = 21
    mode: str = "ode"
    n_theta: int = 16
    n_phi: int = 32
    rho0: Optional[np.ndarray] = None  # overrides the constant-s0 start (pde only)
    max_rel_move: float = 0.01
    cfl_safety: float = 0.5
    phi_filter: bool = True  # per-row azimuthal cutoff near the poles (pde only)
    on_class_violation: str = "raise"  # or "truncate"
    snapshot_stride: int = 1
    record_iso: bool = True
    record_eigen: bool = False

    def __post_init__(self):
        if self.mode not in ("ode", "pde"):
            raise ValueError("mode must be 'ode' or 'pde'")
        if self.n_out < 2:
            raise ValueError("need at least two output times")
        if self.t_final <= 0.0:
            raise ValueError("t_final must be positive")
        if self.mode == "ode":
            if not isinstance(self.ambient, RotSymAmbient):
                raise ValueError("ode mode needs a rotationally symmetric ambient")
            if self.rho0 is not None:
                raise ValueError("ode mode starts from a coordinate sphere")
        if self.on_class_violation not in ("raise", "truncate"):
            raise ValueError("on_class_violation must be 'raise' or 'truncate'")


@dataclass
class RunBounds:
    """Curvature extremes observed over a run (per substep in pde mode)."""

    h_min: float = np.inf
    h_max: float = 0.0
    a_max: float = 0.0

    def update(self, frame: GraphFrame) -> None:
        lam1, lam2 = frame.shape_operator_invariants()
        self.h_min = min(self.h_min, float(frame.H.min()))
        self.h_max = max(self.h_max, float(frame.H.max()))
        self.a_max = max(self.a_max, float(np.abs(lam1).max()), float(np.abs(lam2).max()))


@dataclass
class FlowTrace:
    """Output of run_flow: profiles at all output times plus diagnostics."""

    config: FlowConfig
    grid: SphericalGrid
    times: np.ndarray
    rhos: np.ndarray  # (n_recorded, n_theta, n_phi)
    records: list = field(default_factory=list)
    states: dict = field(default_factory=dict)  # output index -> FlowState
    bounds: RunBounds = field(default_factory=RunBounds)
    violations: list = field(default_factory=list)  # (t, node count)
    aborted: bool = False

    @property
    def n_recorded(self) -> int:
        return len(self.times)

    @property
    def dt_out(self) -> float:
        return float(self.config.t_final / (self.config.n_out - 1))

    def frame(self, k: int) -> GraphFrame:
        return graph_frame(self.config.ambient, ScalarField(self.grid, self.rhos[k]))

    def state(self, k: int) -> FlowState:
        if k in self.states:
            return self.states[k]
        return induced_geometry(
            self.config.ambient, ScalarField(self.grid, self.rhos[k]), t=float(self.times[k])
        )

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def step_ode_rotsym(s: float, dt: float):
    """Exact IMCF step for coordinate spheres: ds/dt = s/2 for any warp.

    H = 2/(s warp(s)) and the outward unit normal moves points radially at
    rate 1/(H warp) = s/2, independent of the warp.
    """
    return s * np.exp(0.5 * dt)


def _theta_gaps(grid: SphericalGrid) -> np.ndarray:
    gaps = np.diff(grid.theta)
    lo = np.concatenate([[2.0 * grid.theta[0]], gaps])
    hi = np.concatenate([gaps, [2.0 * (np.pi - grid.theta[-1])]])
    return np.minimum(lo, hi)


def _phi_cutoffs(grid: SphericalGrid) -> np.ndarray:
    """Largest retained azimuthal wavenumber per latitude row."""
    resolvable = _FILTER_MARGIN * np.sin(grid.theta) * grid.n_phi / 2.0
    caps = np.maximum(_FILTER_M_FLOOR, np.ceil(resolvable).astype(int))
    return np.minimum(caps, grid.n_phi // 2)


def _phi_filter(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    coeffs = np.fft.rfft(values, axis=1)
    coeffs *= mask
    return np.fft.irfft(coeffs, n=values.shape[1], axis=1)


def _cfl_dt(
    frame: GraphFrame, theta_gaps: np.ndarray, phi_symbol: np.ndarray, safety: float
) -> float:
    d_theta = frame.ginv[..., 0, 0] / frame.H**2
    d_phi = frame.ginv[..., 1, 1] / frame.H**2
    rate = _D2_SYMBOL * d_theta / theta_gaps[:, None] ** 2 + d_phi * phi_symbol[:, None]
    return safety * 2.0 / float(rate.max())


def _advance_pde(
    ambient: AmbientMetric,
    grid: SphericalGrid,
    rho: np.ndarray,
    dt_out: float,
    cfg: FlowConfig,
    bounds: RunBounds,
) -> np.ndarray:
    """Heun substeps across one output interval; returns the new profile."""
    theta_gaps = _theta_gaps(grid)
    phi_symbol = np.full(grid.n_theta, _D2_SYMBOL / grid.dphi_h**2)
    mask = None
    if cfg.phi_filter:
        cutoffs = _phi_cutoffs(grid)
        mask = np.arange(grid.n_phi // 2 + 1)[None, :] <= cutoffs[:, None]
        # retained modes see at most the exact symbol m^2; 1.3 covers the
        # fourth-order stencil overshoot near the cutoff
        phi_symbol = np.minimum(phi_symbol, 1.3 * cutoffs.astype(float) ** 2)
        rho = _phi_filter(rho, mask)
    left = dt_out
    while left > 0.0:
        fr = graph_frame(ambient, ScalarField(grid, rho))
        _require_class(fr)
        bounds.update(fr)
        v1 = fr.grad_factor / fr.H
        if mask is not None:
            v1 = _phi_filter(v1, mask)
        dt = min(
            left,
            _cfl_dt(fr, theta_gaps, phi_symbol, cfg.cfl_safety),
            cfg.max_rel_move / float(np.abs(v1 / rho).max()),
        )
        fr_mid = graph_frame(ambient, ScalarField(grid, rho + dt * v1))
        _require_class(fr_mid)
        v2 = fr_mid.grad_factor / fr_mid.H
        if mask is not None:
            v2 = _phi_filter(v2, mask)
        rho = rho + 0.5 * dt * (v1 + v2)
        left -= dt
    return rho


def _require_class(frame: GraphFrame) -> None:
    bad = int(np.sum(~(frame.H > 0.0)) + np.sum(~np.isfinite(frame.H)))
    if bad:
        err = ClassViolationError(f"H lost positivity on {bad} nodes")
        err.node_count = bad
        raise err


def step_pde_graph(state: FlowState, ambient: AmbientMetric, dt: float, **knobs) -> FlowState:
    """Advance one state by dt (with internal substeps) and rebuild it."""
    cfg = FlowConfig(
        ambient=ambient,
        s0=float(state.rho.values.mean()),
        t_final=dt,
        n_out=2,
        mode="pde",
        n_theta=state.grid.n_theta,
        n_phi=state.grid.n_phi,
        **knobs,
    )
    rho = _advance_pde(ambient, state.grid, state.rho.values.copy(), dt, cfg, RunBounds())
    return induced_geometry(ambient, ScalarField(state.grid, rho), t=state.t + dt)


def run_flow(cfg: FlowConfig) -> FlowTrace:
    """Evolve the configured surface and record diagnostics at output times.

    Class violations follow cfg.on_class_violation: 'raise' propagates,
    'truncate' stops stepping and returns the trace recorded so far with
    aborted=True.  Snapshot states (full fundamental forms) are kept every
    snapshot_stride-th output time plus the endpoints.
    """
    from .diagnostics import state_record  # deferred: diagnostics sits on top of flow

    grid = build_grid(cfg.n_theta, cfg.n_phi)
    if cfg.rho0 is not None:
        rho = np.array(cfg.rho0, dtype=float)
        if rho.shape != (cfg.n_theta, cfg.n_phi):
            raise ValueError("rho0 shape does not match grid")
    else:
        rho = np.full((cfg.n_theta, cfg.n_phi), float(cfg.s0))
    times = np.linspace(0.0, cfg.t_final, cfg.n_out)
    dt_out = times[1] - times[0]

    trace = FlowTrace(cfg, grid, times, np.empty((cfg.n_out,) + rho.shape))
    recorded = 0
    try:
        for k, t in enumerate(times):
            frame = graph_frame(cfg.ambient, ScalarField(grid, rho))
            _require_class(frame)
            trace.bounds.update(frame)
            trace.rhos[k] = rho
            trace.records.append(
                state_record(
                    frame,
                    float(t),
                    compute_iso=cfg.record_iso,
                    compute_eigen=cfg.record_eigen,
                )
            )
            if k % cfg.snapshot_stride == 0 or k == cfg.n_out - 1:
                trace.states[k] = _state_from_frame(frame, float(t))
            recorded = k + 1
            if k == cfg.n_out - 1:
                break
            if cfg.mode == "ode":
                rho = step_ode_rotsym(rho, dt_out)
            else:
                rho = _advance_pde(cfg.ambient, grid, rho, dt_out, cfg, trace.bounds)
    except ClassViolationError as err:
        if cfg.on_class_violation == "raise":
            raise
        trace.aborted = True
        trace.times = times[:recorded]
        trace.rhos = trace.rhos[:recorded]
        trace.violations.append(
            (float(times[min(recorded, cfg.n_out - 1)]), getattr(err, "node_count", -1))
        )

    _fill_rates(trace)
    return trace


def _state_from_frame(frame: GraphFrame, t: float) -> FlowState:
    from .grid import SymTensorField2

    return FlowState(
        t=t,
        rho=ScalarField(frame.grid, frame.s.copy()),
        g=SymTensorField2(frame.grid, frame.g.copy()),
        A=SymTensorField2(frame.grid, frame.A.copy()),
        H=ScalarField(frame.grid, frame.H.copy()),
        area=frame.area,
    )


def _fill_rates(trace: FlowTrace) -> None:
    """Centered-difference time derivatives and the rate-balance defect.

    Endpoints stay NaN: the checks are almost-every-t statements and the
    one-sided stencils would degrade the advertised order.
    """
    n = len(trace.records)
    if n < 3:
        return
    dt = float(trace.times[1] - trace.times[0])
    int_H2 = trace.series("int_H2")
    m_H = trace.series("m_H")
    for k in range(1, n - 1):
        r = trace.records[k]
        r.dt_int_H2 = (int_H2[k + 1] - int_H2[k - 1]) / (2.0 * dt)
        r.geroch_rate = (m_H[k + 1] - m_H[k - 1]) / (2.0 * dt)
        rhs = 4.0 * np.pi * r.chi - (
            2.0 * r.int_gradH + 0.5 * r.int_shear + r.int_R + 0.5 * r.int_H2
        )
        r.rate_balance_residual = r.dt_int_H2 - rhs
