"""Induced geometry of radial graph surfaces s = rho(theta, phi).

A surface is stored as the radial profile rho on the parameter grid.  From
rho and the ambient metric we build the induced first and second fundamental
forms with the outward normal convention that makes coordinate spheres in
flat space have H = 2/r > 0.

The same code path handles constant profiles (exact coordinate spheres: all
parameter derivatives of rho vanish identically, so the results are closed
forms up to roundoff) and genuinely graphical surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import AmbientMetric
from .grid import EVEN, ODD, ScalarField, SphericalGrid, SymTensorField2

__all__ = [
    "FlowState",
    "GraphFrame",
    "ClassViolationError",
    "graph_frame",
    "induced_geometry",
    "integrate",
    "grad_norm_sq",
    "principal_curvatures",
    "gauss_curvature",
    "gauss_curvature_intrinsic",
    "euler_characteristic",
]


class ClassViolationError(RuntimeError):
    """Surface left the mean-convex graph class (H <= 0 somewhere)."""


@dataclass
class FlowState:
    """Snapshot of the flow: profile, induced data, scalars."""

    t: float
    rho: ScalarField
    g: SymTensorField2
    A: SymTensorField2
    H: ScalarField
    area: float

    @property
    def grid(self) -> SphericalGrid:
        return self.rho.grid


@dataclass
class GraphFrame:
    """Working bundle for one surface evaluation.

    Everything downstream (stepping, diagnostics, metric blocks) reads from
    here so the fundamental forms are assembled exactly once per surface.
    """

    grid: SphericalGrid
    ambient: AmbientMetric
    s: np.ndarray          # rho values
    g: np.ndarray          # (nt, np, 2, 2)
    ginv: np.ndarray
    detg: np.ndarray
    sqrt_ratio: np.ndarray  # sqrt(det g)/sin(theta), the quadrature density
    A: np.ndarray
    H: np.ndarray
    nu_up: np.ndarray      # outward unit normal, contravariant (nt, np, 3)
    grad_factor: np.ndarray  # |dF|_G for F = s - rho; graph speed is grad_factor/H

    def integrate(self, values) -> float:
        return float(np.sum(self.grid.w2d * np.asarray(values) * self.sqrt_ratio))

    @property
    def area(self) -> float:
        return self.integrate(1.0)

    def shape_operator_invariants(self) -> tuple[np.ndarray, np.ndarray]:
        """(lambda1, lambda2) with lambda1 <= lambda2, H = lambda1 + lambda2."""
        det_shape = (self.A[..., 0, 0] * self.A[..., 1, 1] - self.A[..., 0, 1] ** 2) / self.detg
        disc = np.sqrt(np.maximum(self.H**2 - 4.0 * det_shape, 0.0))
        return 0.5 * (self.H - disc), 0.5 * (self.H + disc)


def graph_frame(ambient: AmbientMetric, rho: ScalarField) -> GraphFrame:
    """Fundamental forms of the graph s = rho over the parameter sphere."""
    grid = rho.grid
    s = rho.values
    ambient.check_chart(s)
    tt, pp = grid.mesh

    r_t = grid.dtheta(s)
    r_p = grid.dphi(s)
    r_tt = grid.d2theta(s)
    r_pp = grid.d2phi(s)
    r_tp = grid.dphi(grid.dtheta(s))

    G = ambient.components(s, tt, pp)
    Gam = ambient.christoffel(s, tt, pp)

    # tangents T_a = (rho_a, delta_a), a in (theta, phi)
    T = np.zeros(s.shape + (2, 3))
    T[..., 0, 0] = r_t
    T[..., 0, 1] = 1.0
    T[..., 1, 0] = r_p
    T[..., 1, 2] = 1.0

    g = np.einsum("...ij,...ai,...bj->...ab", G, T, T)
    detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    if np.any(detg <= 0.0) or np.any(g[..., 0, 0] <= 0.0):
        raise ValueError("induced metric is not positive definite")
    ginv = np.empty_like(g)
    ginv[..., 0, 0] = g[..., 1, 1] / detg
    ginv[..., 1, 1] = g[..., 0, 0] / detg
    ginv[..., 0, 1] = -g[..., 0, 1] / detg
    ginv[..., 1, 0] = ginv[..., 0, 1]

    # outward normal from the level set F = s - rho
    dF = np.zeros(s.shape + (3,))
    dF[..., 0] = 1.0
    dF[..., 1] = -r_t
    dF[..., 2] = -r_p
    Ginv = np.linalg.inv(G)
    grad_up = np.einsum("...ij,...j->...i", Ginv, dF)
    nsq = np.einsum("...i,...i->...", grad_up, dF)
    N = np.sqrt(nsq)
    nu_up = grad_up / N[..., None]
    nu_low = dF / N[..., None]

    hess_s = np.empty(s.shape + (2, 2))
    hess_s[..., 0, 0] = r_tt
    hess_s[..., 0, 1] = r_tp
    hess_s[..., 1, 0] = r_tp
    hess_s[..., 1, 1] = r_pp
    A = -(
        nu_low[..., 0, None, None] * hess_s
        + np.einsum("...k,...kij,...ai,...bj->...ab", nu_low, Gam, T, T)
    )
    H = np.einsum("...ab,...ab->...", ginv, A)

    sqrt_ratio = np.sqrt(detg) / grid.sin_theta
    return GraphFrame(grid, ambient, s, g, ginv, detg, sqrt_ratio, A, H, nu_up, N)


def induced_geometry(
    ambient: AmbientMetric, rho: ScalarField, t: float = 0.0, require_mean_convex: bool = True
) -> FlowState:
    """FlowState of the graph surface at flow time t.

    Mean convexity (H > 0 everywhere) is the flow class; violating surfaces
    raise unless the caller opts out for off-class experiments.
    """
    fr = graph_frame(ambient, rho)
    if require_mean_convex and np.any(fr.H <= 0.0):
        raise ClassViolationError(
            f"H <= 0 on {int(np.sum(fr.H <= 0.0))} nodes at t={t:.6g}"
        )
    grid = rho.grid
    return FlowState(
        t=t,
        rho=rho,
        g=SymTensorField2(grid, fr.g),
        A=SymTensorField2(grid, fr.A),
        H=ScalarField(grid, fr.H),
        area=fr.area,
    )


def integrate(values, g: SymTensorField2) -> float:
    """Integral of a scalar against the area measure of g."""
    grid = g.grid
    detg = g.components[..., 0, 0] * g.components[..., 1, 1] - g.components[..., 0, 1] ** 2
    if np.any(detg <= 0.0) or np.any(g.components[..., 0, 0] <= 0.0):
        raise ValueError("metric is not positive definite")
    ratio = np.sqrt(detg) / grid.sin_theta
    return float(np.sum(grid.w2d * np.asarray(values) * ratio))


def grad_norm_sq(values: np.ndarray, g_components: np.ndarray, grid: SphericalGrid) -> np.ndarray:
    """|grad f|^2_g = g^{ab} f_a f_b for a scalar field f."""
    f_t = grid.dtheta(np.asarray(values))
    f_p = grid.dphi(np.asarray(values))
    g = g_components
    detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    return (g[..., 1, 1] * f_t**2 - 2.0 * g[..., 0, 1] * f_t * f_p + g[..., 0, 0] * f_p**2) / detg


def principal_curvatures(frame: GraphFrame) -> tuple[np.ndarray, np.ndarray]:
    return frame.shape_operator_invariants()


def gauss_curvature(frame: GraphFrame) -> np.ndarray:
    """Gauss curvature through the ambient curvature decomposition.

    K = det(shape operator) + K_tan, where K_tan is the ambient sectional
    curvature of the tangent plane.  In three dimensions the tangent plane
    of a unit normal nu satisfies 2 K_tan = R - 2 Rc(nu, nu), which needs
    one Riemann assembly instead of a plane-by-plane sectional call.
    """
    tt, pp = frame.grid.mesh
    R, Ric = frame.ambient.curvature_fields(frame.s, tt, pp)
    rc_nu = np.einsum("...jl,...j,...l->...", Ric, frame.nu_up, frame.nu_up)
    k_tan = 0.5 * (R - 2.0 * rc_nu)
    det_shape = (frame.A[..., 0, 0] * frame.A[..., 1, 1] - frame.A[..., 0, 1] ** 2) / frame.detg
    return det_shape + k_tan


def gauss_curvature_intrinsic(g: SymTensorField2) -> np.ndarray:
    """Gauss curvature from the induced metric alone (Brioschi formula).

    Independent of the embedding data; agreement with gauss_curvature is a
    Gauss-equation consistency check.  Tensor parities matter here: the
    off-diagonal component is odd under the pole continuation.
    """
    grid = g.grid
    E = g.components[..., 0, 0]
    F = g.components[..., 0, 1]
    Gc = g.components[..., 1, 1]

    E_u = grid.dtheta(E, EVEN)
    E_v = grid.dphi(E)
    E_vv = grid.d2phi(E)
    F_u = grid.dtheta(F, ODD)
    F_v = grid.dphi(F)
    F_uv = grid.dphi(grid.dtheta(F, ODD))
    G_u = grid.dtheta(Gc, EVEN)
    G_v = grid.dphi(Gc)
    G_uu = grid.d2theta(Gc, EVEN)

    M1 = np.empty(E.shape + (3, 3))
    M1[..., 0, 0] = -0.5 * E_vv + F_uv - 0.5 * G_uu
    M1[..., 0, 1] = 0.5 * E_u
    M1[..., 0, 2] = F_u - 0.5 * E_v
    M1[..., 1, 0] = F_v - 0.5 * G_u
    M1[..., 1, 1] = E
    M1[..., 1, 2] = F
    M1[..., 2, 0] = 0.5 * G_v
    M1[..., 2, 1] = F
    M1[..., 2, 2] = Gc

    M2 = np.empty_like(M1)
    M2[..., 0, 0] = 0.0
    M2[..., 0, 1] = 0.5 * E_v
    M2[..., 0, 2] = 0.5 * G_u
    M2[..., 1, 0] = 0.5 * E_v
    M2[..., 1, 1] = E
    M2[..., 1, 2] = F
    M2[..., 2, 0] = 0.5 * G_u
    M2[..., 2, 1] = F
    M2[..., 2, 2] = Gc

    det_g = E * Gc - F**2
    return (np.linalg.det(M1) - np.linalg.det(M2)) / det_g**2


def euler_characteristic(frame: GraphFrame, route: str = "extrinsic") -> float:
    """Gauss-Bonnet integral, int K dmu / (2 pi); should come out 2."""
    if route == "extrinsic":
        K = gauss_curvature(frame)
    elif route == "intrinsic":
        K = gauss_curvature_intrinsic(SymTensorField2(frame.grid, frame.g))
    else:
        raise ValueError("route must be 'extrinsic' or 'intrinsic'")
    return frame.integrate(K) / (2.0 * np.pi)
