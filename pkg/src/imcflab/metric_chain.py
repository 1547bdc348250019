"""Block metrics on the flow cylinder and their pairwise L^2 distances.

Every comparison metric has the block form  lapse^2(x,t) dt^2 + g_t(x)  on
Sigma x [0,T]; assembling them from one trace keeps the time sampling and
grid shared so distances are plain weighted sums.  The chain runs

    hat_g -> g1 -> g2 (or g2') -> g3 -> (delta | g_s)

with hat_g the flow metric (lapse 1/H), g1 the mean-lapse version, g2
freezing the spatial slice at t=0 (g2' at t=T), g3 the model lapse, and
delta / g_s the round Euclidean / Schwarzschild model cylinders.

Distance conventions follow the statements being tested: the first leg is
a raw lapse-difference integral in the flow volume, the second weights by
the model metric, the summary distance to delta (or g_s) uses that model's
norm and volume.  The triangle-consistency assertion is evaluated with one
fixed convention for all legs, where it is an actual metric-space fact.

Also here: Moser's area-equalizing reparameterization of the initial
slice, the round-comparison curvature deficit, and the warped-product
scalar curvature of the g3 block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import gauss_curvature_intrinsic
from .grid import EVEN, ODD, ScalarField, SphericalGrid, SymTensorField2

__all__ = [
    "BLOCK_KINDS",
    "MetricBlock",
    "assemble_blocks",
    "l2_block_distance",
    "ChainReport",
    "chain_report",
    "ReparamMap",
    "moser_reparam",
    "roundness_deficit",
    "warped_scalar_curvature",
]

BLOCK_KINDS = ("hat_g", "g1", "g2", "g2prime", "g3_flat", "g3_schwarz", "delta", "g_s")


@dataclass
class MetricBlock:
    """One block metric lapse_sq(x,t) dt^2 + spatial_t(x) on the cylinder."""

    kind: str
    grid: SphericalGrid
    times: np.ndarray
    r0: float
    lapse_sq: np.ndarray  # (n_t, n_theta, n_phi)
    spatial: np.ndarray  # (n_t, n_theta, n_phi, 2, 2)

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        n_t = len(self.times)
        shape = (n_t, self.grid.n_theta, self.grid.n_phi)
        if self.lapse_sq.shape != shape or self.spatial.shape != shape + (2, 2):
            raise ValueError("block field shapes do not match grid/times")
        if np.any(self.lapse_sq <= 0.0):
            raise ValueError("lapse must be positive")


def _round_spatial(grid: SphericalGrid, radii_sq: np.ndarray) -> np.ndarray:
    """r(t)^2 sigma as a stacked tensor field."""
    n_t = len(radii_sq)
    out = np.zeros((n_t, grid.n_theta, grid.n_phi, 2, 2))
    out[..., 0, 0] = radii_sq[:, None, None]
    out[..., 1, 1] = radii_sq[:, None, None] * grid.sin_theta[None, :, :] ** 2
    return out


def assemble_blocks(trace, m: float, r0: Optional[float] = None) -> dict:
    """All eight comparison blocks from one trace.

    r0 defaults to the initial area radius.  The Schwarzschild lapse needs
    2m < r0 (the model throat must sit inside the initial sphere).
    """
    if r0 is None:
        r0 = float(np.sqrt(trace.records[0].area / (4.0 * np.pi)))
    if 2.0 * m >= r0:
        raise ValueError("Schwarzschild comparison needs 2m < r0")
    grid = trace.grid
    times = np.asarray(trace.times, dtype=float)
    n_t = len(times)

    h_all = np.empty((n_t, grid.n_theta, grid.n_phi))
    g_all = np.empty((n_t, grid.n_theta, grid.n_phi, 2, 2))
    h_bar = np.empty(n_t)
    for k in range(n_t):
        fr = trace.frame(k)
        h_all[k] = fr.H
        g_all[k] = fr.g
        h_bar[k] = fr.integrate(fr.H) / fr.area
    if np.any(h_bar <= 0.0):
        raise ValueError("mean lapse undefined: average H is not positive")

    e_t = np.exp(times)
    flat_lapse = (r0**2 / 4.0) * e_t
    schwarz_lapse = flat_lapse / (1.0 - (2.0 * m / r0) * np.exp(-0.5 * times))
    ones = np.ones((n_t, grid.n_theta, grid.n_phi))

    g2_spatial = e_t[:, None, None, None, None] * g_all[0]
    round_sq = _round_spatial(grid, r0**2 * e_t)

    def blk(kind, lapse, spatial):
        return MetricBlock(kind, grid, times, r0, lapse, spatial)

    return {
        "hat_g": blk("hat_g", 1.0 / h_all**2, g_all),
        "g1": blk("g1", ones / h_bar[:, None, None] ** 2, g_all),
        "g2": blk("g2", ones / h_bar[:, None, None] ** 2, g2_spatial),
        "g2prime": blk(
            "g2prime",
            ones / h_bar[:, None, None] ** 2,
            np.exp(times - times[-1])[:, None, None, None, None] * g_all[-1],
        ),
        "g3_flat": blk("g3_flat", ones * flat_lapse[:, None, None], g2_spatial),
        "g3_schwarz": blk("g3_schwarz", ones * schwarz_lapse[:, None, None], g2_spatial),
        "delta": blk("delta", ones * flat_lapse[:, None, None], round_sq),
        "g_s": blk("g_s", ones * schwarz_lapse[:, None, None], round_sq),
    }


def _volume_weights(volume: str, blocks_for_volume: Optional[MetricBlock], grid, times, r0):
    """w(x,t) with int f dV = sum over nodes/times of w*f (trapezoid in t)."""
    n_t = len(times)
    tw = np.full(n_t, times[1] - times[0]) if n_t > 1 else np.ones(1)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    if volume == "delta_volume":
        rad = (r0**3 / 2.0) * np.exp(1.5 * np.asarray(times))
        return tw[:, None, None] * rad[:, None, None] * grid.w2d[None, :, :]
    if volume != "hatg_volume":
        raise ValueError("volume must be 'hatg_volume' or 'delta_volume'")
    if blocks_for_volume is None or blocks_for_volume.kind != "hat_g":
        raise ValueError("hatg_volume needs the hat_g block")
    b = blocks_for_volume
    detg = b.spatial[..., 0, 0] * b.spatial[..., 1, 1] - b.spatial[..., 0, 1] ** 2
    # sqrt(det hat_g) = sqrt(lapse_sq) * sqrt(det spatial); dmu dt / H
    dens = np.sqrt(b.lapse_sq) * np.sqrt(detg) / grid.sin_theta[None, :, :]
    return tw[:, None, None] * dens * grid.w2d[None, :, :]


def _norm_sq(h_tt, h_sp, norm_metric: Optional[MetricBlock]):
    """|h|^2 for block-diagonal h: raw Frobenius or weighted by a block metric."""
    if norm_metric is None:
        return h_tt**2 + np.einsum("...ab,...ab->...", h_sp, h_sp)
    g = norm_metric.spatial
    detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    gi = np.empty_like(g)
    gi[..., 0, 0] = g[..., 1, 1] / detg
    gi[..., 1, 1] = g[..., 0, 0] / detg
    gi[..., 0, 1] = gi[..., 1, 0] = -g[..., 0, 1] / detg
    up = np.einsum("...ac,...bd,...cd->...ab", gi, gi, h_sp)
    return (h_tt / norm_metric.lapse_sq) ** 2 + np.einsum("...ab,...ab->...", up, h_sp)


def l2_block_distance(
    a: MetricBlock,
    b: MetricBlock,
    norm_metric: Optional[MetricBlock] = None,
    volume: str = "hatg_volume",
    volume_block: Optional[MetricBlock] = None,
) -> float:
    """int_0^T int |a - b|^2 dV over the cylinder.

    norm_metric None means the raw componentwise square (the convention the
    lapse-difference proofs compute with); otherwise indices are raised with
    the given block.  hatg_volume integrates dmu dt / H and needs the hat_g
    block (taken from volume_block, or a/b when one of them is it).
    """
    if a.grid is not b.grid or len(a.times) != len(b.times):
        raise ValueError("blocks must share grid and time sampling")
    if volume_block is None:
        volume_block = a if a.kind == "hat_g" else b if b.kind == "hat_g" else None
    w = _volume_weights(volume, volume_block, a.grid, a.times, a.r0)
    h_tt = a.lapse_sq - b.lapse_sq
    h_sp = a.spatial - b.spatial
    return float(np.sum(w * _norm_sq(h_tt, h_sp, norm_metric)))


@dataclass
class ChainReport:
    """Chain distances, each leg in its own convention, plus a uniform triangle check."""

    scenario: str
    d_hat_g1: float
    d_g1_g2: float
    d_g2_g3: float
    d_total: float  # (hat_g, delta) for pmt, (hat_g, g_s) for rpi
    uniform: dict  # same legs plus (hat_g, g3) in one fixed convention
    triangle_ok: bool

    @property
    def pairwise(self) -> tuple:
        return (self.d_hat_g1, self.d_g1_g2, self.d_g2_g3)


def chain_report(trace, m: float, scenario: str = "pmt", reparam=None) -> ChainReport:
    """All pairwise chain distances of one run.

    Each leg uses its own norm and volume convention; the triangle consistency
    total <= (sum of sqrt pairwise)^2 is asserted in a single convention
    (g3 norm, flow volume) where it is a genuine metric-space inequality.
    Optionally pulls every block through a reparameterization first.
    """
    if scenario not in ("pmt", "rpi"):
        raise ValueError("scenario must be 'pmt' or 'rpi'")
    blocks = assemble_blocks(trace, m=m)
    if reparam is not None:
        blocks = {k: reparam.pullback_block(v) for k, v in blocks.items()}
    g3 = blocks["g3_flat"] if scenario == "pmt" else blocks["g3_schwarz"]
    model = blocks["delta"] if scenario == "pmt" else blocks["g_s"]
    hat = blocks["hat_g"]

    d1 = l2_block_distance(hat, blocks["g1"], None, "hatg_volume")
    d2 = l2_block_distance(blocks["g1"], blocks["g2"], g3, "hatg_volume", volume_block=hat)
    d3 = l2_block_distance(blocks["g2"], g3, None, "hatg_volume", volume_block=hat)
    d_total = l2_block_distance(hat, model, model, "delta_volume")

    uniform = {
        "hat_g1": l2_block_distance(hat, blocks["g1"], g3, "hatg_volume"),
        "g1_g2": d2,
        "g2_g3": l2_block_distance(blocks["g2"], g3, g3, "hatg_volume", volume_block=hat),
        "hat_g3": l2_block_distance(hat, g3, g3, "hatg_volume"),
    }
    bound = sum(np.sqrt(uniform[k]) for k in ("hat_g1", "g1_g2", "g2_g3")) ** 2
    triangle_ok = uniform["hat_g3"] <= bound * (1.0 + 1e-12) + 1e-300
    return ChainReport(scenario, d1, d2, d3, d_total, uniform, bool(triangle_ok))


# -- Moser area-equalizing reparameterization --------------------------------

@dataclass
class ReparamMap:
    """Nodewise sphere diffeomorphism x -> (theta_map, phi_map)(x)."""

    grid: SphericalGrid
    theta_map: np.ndarray
    phi_map: np.ndarray
    jac_det: np.ndarray
    identity: bool = False

    def displacement_fields(self):
        """(u_theta, u_phi) with parities (odd, even) under pole continuation."""
        tt, pp = self.grid.mesh
        u_th = self.theta_map - tt
        u_ph = (self.phi_map - pp + np.pi) % (2.0 * np.pi) - np.pi
        return u_th, u_ph

    def apply_scalar(self, values: np.ndarray, parity: int = EVEN) -> np.ndarray:
        if self.identity:
            return np.array(values, dtype=float)
        f = self.grid.interpolator(values, parity)
        return f(self.theta_map, self.phi_map)

    def jacobian(self) -> np.ndarray:
        """DM as (..., 2, 2): d(theta_map, phi_map)/d(theta, phi)."""
        g = self.grid
        u_th, u_ph = self.displacement_fields()
        j = np.empty((g.n_theta, g.n_phi, 2, 2))
        j[..., 0, 0] = 1.0 + g.dtheta(u_th, parity=ODD)
        j[..., 0, 1] = g.dphi(u_th)
        j[..., 1, 0] = g.dtheta(u_ph, parity=EVEN)
        j[..., 1, 1] = 1.0 + g.dphi(u_ph)
        return j

    def pullback_metric(self, components: np.ndarray) -> np.ndarray:
        """(M^* g)_ab = J^c_a J^d_b g_cd(M(x)) for a 2x2 field on the sphere."""
        if self.identity:
            return np.array(components, dtype=float)
        j = self.jacobian()
        parities = ((EVEN, ODD), (ODD, EVEN))
        moved = np.empty_like(components)
        for c in range(2):
            for d in range(2):
                moved[..., c, d] = self.apply_scalar(components[..., c, d], parities[c][d])
        return np.einsum("...ca,...db,...cd->...ab", j, j, moved)

    def pullback_block(self, block: MetricBlock) -> MetricBlock:
        if self.identity:
            return block
        lapse = np.stack([self.apply_scalar(block.lapse_sq[k]) for k in range(len(block.times))])
        spatial = np.stack(
            [self.pullback_metric(block.spatial[k]) for k in range(len(block.times))]
        )
        return MetricBlock(block.kind, block.grid, block.times, block.r0, lapse, spatial)


def _round_poisson_solve(grid: SphericalGrid, rhs: np.ndarray) -> np.ndarray:
    """Weak-form solve of Delta_sigma u = rhs on the unit round sphere.

    rhs must have zero round-measure mean; the constant nullspace is pinned
    at one node and the mean is removed from the solution.
    """
    w = grid.w2d.ravel()  # already integrates against sin(theta) dtheta dphi
    d_th = grid.sparse_dtheta(EVEN)
    d_ph = grid.sparse_dphi()
    sin2 = np.repeat(grid.sin_theta[:, 0] ** 2, grid.n_phi)
    stiff = d_th.T @ sp.diags(w) @ d_th + d_ph.T @ sp.diags(w / sin2) @ d_ph
    stiff = (0.5 * (stiff + stiff.T)).tolil()
    load = -(w * rhs.ravel())  # weak form of -Delta u = -rhs
    pin = 0
    stiff[pin, :] = 0.0
    stiff[pin, pin] = 1.0
    load[pin] = 0.0
    u = spla.spsolve(stiff.tocsc(), load)
    u -= np.sum(w * u) / np.sum(w)
    return u.reshape(grid.n_theta, grid.n_phi)


def moser_reparam(g0: SymTensorField2, r0: float, n_steps: int = 32) -> ReparamMap:
    """Area-equalizing diffeomorphism: pushes the g0 area measure to r0^2 dsigma.

    Moser's flow construction on the round sphere: with density
    f = sqrt(det g0)/(r0^2 sin theta) (mean 1 after the area check), solve
    Delta u = f - 1 and transport nodes by V_tau = grad u / f_tau along the
    linear density path f_tau = 1 + (1 - tau)(f - 1), tau from 0 to 1.
    """
    grid = g0.grid
    g = g0.components
    detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    f1 = np.sqrt(detg) / (r0**2 * grid.sin_theta)

    area = float(np.sum(grid.w2d * np.sqrt(detg) / grid.sin_theta))
    target = 4.0 * np.pi * r0**2
    if abs(area - target) > 1e-6 * target:
        raise ValueError("initial area is not 4 pi r0^2; rescale before reparameterizing")

    tt, pp = grid.mesh
    if np.max(np.abs(f1 - 1.0)) < 1e-13:
        return ReparamMap(grid, tt.copy(), pp.copy(), np.ones_like(f1), identity=True)

    u = _round_poisson_solve(grid, f1 - 1.0)
    interp_ut = grid.interpolator(grid.dtheta(u), ODD)
    interp_up = grid.interpolator(grid.dphi(u), EVEN)
    interp_f = grid.interpolator(f1, EVEN)

    def velocity(theta, phi, tau):
        f_tau = 1.0 + (1.0 - tau) * (interp_f(theta, phi) - 1.0)
        sin_t = np.sin(theta)
        v_th = interp_ut(theta, phi) / f_tau
        v_ph = interp_up(theta, phi) / (f_tau * sin_t**2)
        return v_th, v_ph

    th = tt.copy()
    ph = pp.copy()
    h = 1.0 / n_steps
    for step in range(n_steps):
        tau = step * h
        k1t, k1p = velocity(th, ph, tau)
        k2t, k2p = velocity(th + 0.5 * h * k1t, ph + 0.5 * h * k1p, tau + 0.5 * h)
        k3t, k3p = velocity(th + 0.5 * h * k2t, ph + 0.5 * h * k2p, tau + 0.5 * h)
        k4t, k4p = velocity(th + h * k3t, ph + h * k3p, tau + h)
        th = th + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        ph = ph + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)

    out = ReparamMap(grid, th, np.mod(ph, 2.0 * np.pi), np.ones_like(th))
    jac = out.jacobian()
    out.jac_det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(out.jac_det <= 0.0):
        raise RuntimeError("Moser transport produced a folded map")
    return out


def pushforward_density_error(reparam: ReparamMap, g0: SymTensorField2, r0: float) -> float:
    """max |f1 sin(theta) / (jac sin(theta_map)) - 1|: area-preservation defect."""
    g = g0.components
    detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    f1 = np.sqrt(detg) / (r0**2 * reparam.grid.sin_theta)
    if reparam.identity:
        return float(np.max(np.abs(f1 - 1.0)))
    lhs = f1 * reparam.grid.sin_theta
    rhs = reparam.jac_det * np.sin(reparam.theta_map)
    return float(np.max(np.abs(lhs / rhs - 1.0)))


# -- round-comparison diagnostics --------------------------------------------

def roundness_deficit(trace, r0: Optional[float] = None) -> np.ndarray:
    """Scaled L^2 curvature deficit against the comparison round sphere.

    (1/|S_t|) * 2^4 * int (K - e^{-t}/r0^2)^2 dmu per output time, K the
    Gauss curvature through the ambient decomposition (exact on coordinate
    spheres, where intrinsic finite differencing would swamp the signal).
    """
    if r0 is None:
        r0 = float(np.sqrt(trace.records[0].area / (4.0 * np.pi)))
    times = np.asarray(trace.times, dtype=float)
    out = np.empty(len(times))
    for k, t in enumerate(times):
        fr = trace.frame(k)
        lam1, lam2 = fr.shape_operator_invariants()
        tt, pp = fr.grid.mesh
        r_sc, ric = fr.ambient.curvature_fields(fr.s, tt, pp)
        rc_nu = np.einsum("...jl,...j,...l->...", ric, fr.nu_up, fr.nu_up)
        gauss = lam1 * lam2 + 0.5 * (r_sc - 2.0 * rc_nu)
        target = np.exp(-t) / r0**2
        out[k] = 16.0 * fr.integrate((gauss - target) ** 2) / fr.area
    return out


def warped_scalar_curvature(g3: MetricBlock, gauss: Optional[np.ndarray] = None) -> np.ndarray:
    """Scalar curvature of the warped block: -2/s^2 + 2 K r0^2 / s^2, s = r0 e^{t/2}.

    K is the Gauss curvature of the t=0 spatial slice (intrinsic, metric
    only); an explicit K can be passed for formula-level checks.  Vanishes
    identically iff K = 1/r0^2.
    """
    if gauss is None:
        gauss = gauss_curvature_intrinsic(SymTensorField2(g3.grid, g3.spatial[0]))
    s_sq = g3.r0**2 * np.exp(np.asarray(g3.times))
    return (-2.0 + 2.0 * gauss[None, :, :] * g3.r0**2) / s_sq[:, None, None]
