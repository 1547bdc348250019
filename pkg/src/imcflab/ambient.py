"""Ambient 3-metrics on the exterior chart (s, theta, phi).

Coordinate order is (s, theta, phi) = indices (0, 1, 2).  Every family
exposes metric components plus first and second coordinate derivatives;
curvature (Christoffels, Riemann, Ricci, scalar, sectional) is assembled
generically from those, so one code path serves the closed-form families
and the perturbed ones alike.  The rotationally symmetric families carry
analytic derivatives; the perturbed family has analytic first derivatives
and finite-differenced second derivatives.

All evaluation methods are vectorized: s, theta, phi broadcast, tensors
come back with trailing component axes, e.g. components(...) has shape
broadcast_shape + (3, 3).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sphharm import bump, real_sph_harm, real_sph_harm_dphi, real_sph_harm_dtheta

__all__ = [
    "AmbientMetric",
    "RotSymAmbient",
    "PerturbedAmbient",
    "euclidean",
    "schwarzschild",
    "AFReport",
    "af_constants",
]


class ChartError(ValueError):
    """Raised when an evaluation point leaves the valid chart region."""


class AmbientMetric:
    """Base class: metric components in the (s, theta, phi) chart.

    Subclasses implement components() and dcomponents(); d2components()
    falls back to fourth-order finite differences of dcomponents().
    """

    name = "ambient"
    chart_inner_radius = 0.0

    def components(self, s, theta, phi) -> np.ndarray:
        raise NotImplementedError

    def dcomponents(self, s, theta, phi) -> np.ndarray:
        """d2c[..., k, i, j] = partial_k G_ij, k in (s, theta, phi)."""
        raise NotImplementedError

    def d2components(self, s, theta, phi) -> np.ndarray:
        """dd[..., k, l, i, j] = partial_k partial_l G_ij.

        Generic fallback: fourth-order centered differences of the analytic
        first derivatives, one sweep per coordinate direction.  Step sizes
        scale with s radially and are absolute in the angles.
        """
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        s, theta, phi = np.broadcast_arrays(s, theta, phi)
        shape = s.shape
        out = np.empty(shape + (3, 3, 3, 3))
        steps = (1e-4 * np.maximum(s, 1.0), 1e-4, 1e-4)
        for l in range(3):
            h = steps[l]
            args = [s, theta, phi]
            plus1 = list(args)
            plus2 = list(args)
            minus1 = list(args)
            minus2 = list(args)
            plus1[l] = args[l] + h
            plus2[l] = args[l] + 2 * h
            minus1[l] = args[l] - h
            minus2[l] = args[l] - 2 * h
            d = (
                8.0 * (self.dcomponents(*plus1) - self.dcomponents(*minus1))
                - (self.dcomponents(*plus2) - self.dcomponents(*minus2))
            )
            if np.ndim(h) == 0:
                out[..., :, l, :, :] = d / (12.0 * h)
            else:
                out[..., :, l, :, :] = d / (12.0 * h[..., None, None, None])
        # enforce symmetry of mixed partials; halves the FD noise too
        return 0.5 * (out + np.swapaxes(out, -4, -3))

    # -- generic curvature ---------------------------------------------------

    def check_chart(self, s) -> None:
        if np.any(np.asarray(s) <= self.chart_inner_radius):
            raise ChartError(
                f"point at s={float(np.min(s)):.6g} inside chart inner radius "
                f"{self.chart_inner_radius:.6g} of {self.name}"
            )

    def inverse(self, s, theta, phi) -> np.ndarray:
        return np.linalg.inv(self.components(s, theta, phi))

    def christoffel(self, s, theta, phi) -> np.ndarray:
        """Gamma[..., i, j, k] = Gamma^i_jk."""
        Ginv = self.inverse(s, theta, phi)
        dG = self.dcomponents(s, theta, phi)
        # S[..., m, j, k] = d_j G_mk + d_k G_mj - d_m G_jk
        S = dG.swapaxes(-3, -2) + np.moveaxis(dG, -3, -1) - dG
        return 0.5 * np.einsum("...im,...mjk->...ijk", Ginv, S)

    def _riemann_up(self, s, theta, phi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Riemann R^i_jkl plus (G, Ginv) at the same points."""
        G = self.components(s, theta, phi)
        Ginv = np.linalg.inv(G)
        dG = self.dcomponents(s, theta, phi)
        ddG = self.d2components(s, theta, phi)
        S = dG.swapaxes(-3, -2) + np.moveaxis(dG, -3, -1) - dG
        Gam = 0.5 * np.einsum("...im,...mjk->...ijk", Ginv, S)
        # dS[..., l, m, j, k] = d_l S_mjk
        dS = np.einsum("...ljmk->...lmjk", ddG) + np.einsum("...lkmj->...lmjk", ddG) - ddG
        dGinv = -np.einsum("...ia,...lab,...bm->...lim", Ginv, dG, Ginv)
        dGam = 0.5 * np.einsum("...lim,...mjk->...lijk", dGinv, S) + 0.5 * np.einsum(
            "...im,...lmjk->...lijk", Ginv, dS
        )
        # R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj + Gam^i_km Gam^m_lj - Gam^i_lm Gam^m_kj
        Rm = (
            np.einsum("...kilj->...ijkl", dGam)
            - np.einsum("...likj->...ijkl", dGam)
            + np.einsum("...ikm,...mlj->...ijkl", Gam, Gam)
            - np.einsum("...ilm,...mkj->...ijkl", Gam, Gam)
        )
        return Rm, G, Ginv

    def ricci(self, s, theta, phi) -> np.ndarray:
        Rm, _, _ = self._riemann_up(s, theta, phi)
        return np.einsum("...kjkl->...jl", Rm)

    def scalar_curvature(self, s, theta, phi) -> np.ndarray:
        Rm, _, Ginv = self._riemann_up(s, theta, phi)
        Ric = np.einsum("...kjkl->...jl", Rm)
        return np.einsum("...jl,...jl->...", Ginv, Ric)

    def ricci_normal(self, s, theta, phi, nu_up) -> np.ndarray:
        """Rc(nu, nu) for a unit vector field nu (contravariant components).

        nu is renormalized; a deviation beyond 1e-8 draws a warning since it
        usually means the caller mixed up frames.
        """
        Rm, G, _ = self._riemann_up(s, theta, phi)
        Ric = np.einsum("...kjkl->...jl", Rm)
        nu_up = np.asarray(nu_up, dtype=float)
        nsq = np.einsum("...ij,...i,...j->...", G, nu_up, nu_up)
        if np.any(np.abs(nsq - 1.0) > 1e-8):
            warnings.warn("ricci_normal: normal was not unit, renormalizing")
        nu_up = nu_up / np.sqrt(nsq)[..., None]
        return np.einsum("...jl,...j,...l->...", Ric, nu_up, nu_up)

    def sectional(self, s, theta, phi, X, Y) -> np.ndarray:
        """Sectional curvature of span(X, Y), contravariant inputs."""
        Rm, G, _ = self._riemann_up(s, theta, phi)
        Rm_low = np.einsum("...ia,...ajkl->...ijkl", G, Rm)
        num = np.einsum("...ijkl,...i,...j,...k,...l->...", Rm_low, X, Y, X, Y)
        xx = np.einsum("...ij,...i,...j->...", G, X, X)
        yy = np.einsum("...ij,...i,...j->...", G, Y, Y)
        xy = np.einsum("...ij,...i,...j->...", G, X, Y)
        return num / (xx * yy - xy**2)

    def curvature_fields(self, s, theta, phi) -> tuple[np.ndarray, np.ndarray]:
        """(scalar curvature R, Ricci tensor) in one Riemann assembly."""
        Rm, _, Ginv = self._riemann_up(s, theta, phi)
        Ric = np.einsum("...kjkl->...jl", Rm)
        R = np.einsum("...jl,...jl->...", Ginv, Ric)
        return R, Ric


@dataclass
class RotSymAmbient(AmbientMetric):
    """Metric warp(s)^2 ds^2 + s^2 (dtheta^2 + sin^2 theta dphi^2).

    warp, dwarp, d2warp are callables of s.  chart_inner_radius marks where
    the warp stops being a positive smooth function (2m for the mass-m
    family below).
    """

    warp: Callable[[np.ndarray], np.ndarray]
    dwarp: Callable[[np.ndarray], np.ndarray]
    d2warp: Callable[[np.ndarray], np.ndarray]
    chart_inner_radius: float = 0.0
    name: str = "rotsym"

    def _prep(self, s, theta, phi):
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        return np.broadcast_arrays(s, theta, phi)

    def components(self, s, theta, phi) -> np.ndarray:
        s, theta, phi = self._prep(s, theta, phi)
        w = self.warp(s)
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise ChartError(f"warp not positive on evaluation points of {self.name}")
        G = np.zeros(s.shape + (3, 3))
        G[..., 0, 0] = w**2
        G[..., 1, 1] = s**2
        G[..., 2, 2] = s**2 * np.sin(theta) ** 2
        return G

    def dcomponents(self, s, theta, phi) -> np.ndarray:
        s, theta, phi = self._prep(s, theta, phi)
        w = self.warp(s)
        dw = self.dwarp(s)
        sin_t, cos_t = np.sin(theta), np.cos(theta)
        dG = np.zeros(s.shape + (3, 3, 3))
        dG[..., 0, 0, 0] = 2.0 * w * dw
        dG[..., 0, 1, 1] = 2.0 * s
        dG[..., 0, 2, 2] = 2.0 * s * sin_t**2
        dG[..., 1, 2, 2] = 2.0 * s**2 * sin_t * cos_t
        return dG

    def d2components(self, s, theta, phi) -> np.ndarray:
        s, theta, phi = self._prep(s, theta, phi)
        w = self.warp(s)
        dw = self.dwarp(s)
        ddw = self.d2warp(s)
        sin_t, cos_t = np.sin(theta), np.cos(theta)
        dd = np.zeros(s.shape + (3, 3, 3, 3))
        dd[..., 0, 0, 0, 0] = 2.0 * (dw**2 + w * ddw)
        dd[..., 0, 0, 1, 1] = 2.0
        dd[..., 0, 0, 2, 2] = 2.0 * sin_t**2
        dd[..., 0, 1, 2, 2] = 4.0 * s * sin_t * cos_t
        dd[..., 1, 0, 2, 2] = 4.0 * s * sin_t * cos_t
        dd[..., 1, 1, 2, 2] = 2.0 * s**2 * (cos_t**2 - sin_t**2)
        return dd


def euclidean() -> RotSymAmbient:
    """Flat space in spherical coordinates."""
    one = lambda s: np.ones_like(np.asarray(s, dtype=float))
    zero = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    return RotSymAmbient(one, zero, zero, 0.0, "euclidean")


def schwarzschild(m: float) -> RotSymAmbient:
    """Spatial slice of mass m in area coordinates: warp = (1 - 2m/s)^(-1/2)."""
    if m < 0:
        raise ValueError("mass must be nonnegative")

    def warp(s):
        s = np.asarray(s, dtype=float)
        return (1.0 - 2.0 * m / s) ** -0.5

    def dwarp(s):
        s = np.asarray(s, dtype=float)
        return -(m / s**2) * (1.0 - 2.0 * m / s) ** -1.5

    def d2warp(s):
        s = np.asarray(s, dtype=float)
        f = 1.0 - 2.0 * m / s
        return (2.0 * m / s**3) * f**-1.5 + 3.0 * (m / s**2) ** 2 * f**-2.5

    return RotSymAmbient(warp, dwarp, d2warp, 2.0 * m, f"schwarzschild(m={m:g})")


@dataclass
class PerturbedAmbient(AmbientMetric):
    """Conformal angular perturbation of a rotationally symmetric base.

    G = Omega^2 G_base with Omega = 1 + eps * chi(s) * Y_lm(theta, phi),
    chi a smooth bump supported on (r_in, r_out).  First derivatives are
    analytic (product rule); second derivatives fall back to the generic
    finite-difference sweep, which is why the bump and harmonic come with
    analytic first derivatives only.
    """

    base: RotSymAmbient
    eps: float
    l: int
    m: int
    r_in: float
    r_out: float

    def __post_init__(self):
        if not self.r_out > self.r_in > self.base.chart_inner_radius:
            raise ValueError("perturbation support must sit inside the chart")
        self.chart_inner_radius = self.base.chart_inner_radius
        self.name = (
            f"perturbed({self.base.name}, eps={self.eps:g}, Y({self.l},{self.m}), "
            f"[{self.r_in:g},{self.r_out:g}])"
        )

    def _u(self, s):
        c = 0.5 * (self.r_in + self.r_out)
        halfw = 0.5 * (self.r_out - self.r_in)
        return (np.asarray(s, dtype=float) - c) / halfw, halfw

    def _omega(self, s, theta, phi):
        u, _ = self._u(s)
        return 1.0 + self.eps * bump(u) * real_sph_harm(self.l, self.m, theta, phi)

    def _domega(self, s, theta, phi):
        u, halfw = self._u(s)
        chi = bump(u)
        dchi = bump(u, deriv=1) / halfw
        Y = real_sph_harm(self.l, self.m, theta, phi)
        dY_t = real_sph_harm_dtheta(self.l, self.m, theta, phi)
        dY_p = real_sph_harm_dphi(self.l, self.m, theta, phi)
        return (
            self.eps * dchi * Y,
            self.eps * chi * dY_t,
            self.eps * chi * dY_p,
        )

    def components(self, s, theta, phi) -> np.ndarray:
        s, theta, phi = np.broadcast_arrays(
            np.asarray(s, dtype=float), np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
        )
        om = self._omega(s, theta, phi)
        return om[..., None, None] ** 2 * self.base.components(s, theta, phi)

    def dcomponents(self, s, theta, phi) -> np.ndarray:
        s, theta, phi = np.broadcast_arrays(
            np.asarray(s, dtype=float), np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
        )
        G = self.base.components(s, theta, phi)
        dG = self.base.dcomponents(s, theta, phi)
        om = self._omega(s, theta, phi)
        dom = np.stack(self._domega(s, theta, phi), axis=-1)  # (..., 3)
        out = om[..., None, None, None] ** 2 * dG
        out += 2.0 * om[..., None, None, None] * dom[..., :, None, None] * G[..., None, :, :]
        return out


def _default_shells(amb: AmbientMetric) -> np.ndarray:
    anchor = max(1.0, 4.0 * amb.chart_inner_radius)
    return anchor * 2.0 ** np.arange(2, 7)


@dataclass
class AFReport:
    """Decay constants of g - delta in the Cartesian frame, shell by shell.

    Rows hold sup_shell |g - delta| * r, sup |dg| * r^2, sup |ddg| * r^3.
    The constants are the sups over shells; monotone records whether each
    weighted sup is nonincreasing outward, the expected signature of
    1/r-type falloff.
    """

    radii: np.ndarray
    metric_sup: np.ndarray
    deriv_sup: np.ndarray
    deriv2_sup: np.ndarray

    @property
    def c_metric(self) -> float:
        return float(self.metric_sup.max())

    @property
    def c_deriv(self) -> float:
        return float(self.deriv_sup.max())

    @property
    def c_deriv2(self) -> float:
        return float(self.deriv2_sup.max())

    @property
    def monotone(self) -> bool:
        def ok(a):
            return bool(np.all(np.diff(a) <= 1e-9 * np.abs(a[:-1]) + 1e-12))

        return ok(self.metric_sup) and ok(self.deriv_sup) and ok(self.deriv2_sup)


def _cartesian_components(amb: AmbientMetric, pts: np.ndarray) -> np.ndarray:
    """Metric components in the Cartesian frame at points pts (..., 3)."""
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    s = np.sqrt(x**2 + y**2 + z**2)
    theta = np.arccos(np.clip(z / s, -1.0, 1.0))
    phi = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    G = amb.components(s, theta, phi)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    sin_p, cos_p = np.sin(phi), np.cos(phi)
    # J[..., a, i] = d x^a / d q^i, q = (s, theta, phi)
    J = np.empty(pts.shape[:-1] + (3, 3))
    J[..., 0, 0] = sin_t * cos_p
    J[..., 1, 0] = sin_t * sin_p
    J[..., 2, 0] = cos_t
    J[..., 0, 1] = s * cos_t * cos_p
    J[..., 1, 1] = s * cos_t * sin_p
    J[..., 2, 1] = -s * sin_t
    J[..., 0, 2] = -s * sin_t * sin_p
    J[..., 1, 2] = s * sin_t * cos_p
    J[..., 2, 2] = 0.0
    Jinv = np.linalg.inv(J)  # d q^i / d x^a
    return np.einsum("...ia,...jb,...ij->...ab", Jinv, Jinv, G)


def af_constants(amb: AmbientMetric, radii=None, n_theta: int = 16, n_phi: int = 32) -> AFReport:
    """Sample asymptotic-flatness decay constants on coordinate shells.

    Cartesian derivatives are centered differences (fourth order for the
    aligned ones, second for the cross terms) with step 1e-3 * r; more than
    enough for a falloff diagnostic.
    """
    if radii is None:
        radii = _default_shells(amb)
    radii = np.asarray(radii, dtype=float)
    theta = np.pi * (np.arange(n_theta) + 0.5) / n_theta
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    nhat = np.stack(
        [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
    )
    eye = np.eye(3)
    m_sup = np.empty(len(radii))
    d_sup = np.empty(len(radii))
    d2_sup = np.empty(len(radii))
    for k, r in enumerate(radii):
        pts = r * nhat
        h = 1e-3 * r
        g0 = _cartesian_components(amb, pts)
        m_sup[k] = np.abs(g0 - eye).max() * r

        shifted = {}
        for a in range(3):
            for step in (-2, -1, 1, 2):
                shifted[a, step] = _cartesian_components(amb, pts + step * h * eye[a])
        dg = np.stack(
            [
                (8.0 * (shifted[a, 1] - shifted[a, -1]) - (shifted[a, 2] - shifted[a, -2]))
                / (12.0 * h)
                for a in range(3)
            ]
        )
        d_sup[k] = np.abs(dg).max() * r**2

        dd_max = 0.0
        for a in range(3):
            second = (
                -shifted[a, 2] + 16.0 * shifted[a, 1] - 30.0 * g0 + 16.0 * shifted[a, -1] - shifted[a, -2]
            ) / (12.0 * h**2)
            dd_max = max(dd_max, np.abs(second).max())
        for a in range(3):
            for b in range(a + 1, 3):
                gpp = _cartesian_components(amb, pts + h * (eye[a] + eye[b]))
                gpm = _cartesian_components(amb, pts + h * (eye[a] - eye[b]))
                gmp = _cartesian_components(amb, pts + h * (-eye[a] + eye[b]))
                gmm = _cartesian_components(amb, pts - h * (eye[a] + eye[b]))
                cross = (gpp - gpm - gmp + gmm) / (4.0 * h**2)
                dd_max = max(dd_max, np.abs(cross).max())
        d2_sup[k] = dd_max * r**3
    return AFReport(radii, m_sup, d_sup, d2_sup)
