"""Spherical parameter grid, quadrature and derivative stencils.

Surfaces are stored as fields on a fixed (theta, phi) grid: Gauss-Legendre
nodes in cos(theta) crossed with a uniform periodic phi mesh.  The poles are
never grid points, so 1/sin(theta) factors stay finite, and integration of
smooth fields against the round measure is spectrally accurate in theta.

Derivatives in theta use nonuniform centered stencils.  Rows near the poles
are closed by continuing fields across the pole: the parameter point
(-theta, phi) labels the physical point (theta, phi + pi), so ghost rows are
copies of interior rows rolled by half a period, with a sign that depends on
the tensor character of the field (v^theta and g_theta_phi flip, scalars and
diagonal metric components do not).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "SphericalGrid",
    "ScalarField",
    "SymTensorField2",
    "build_grid",
]

# Parity of a field under the pole continuation (theta, phi) -> (-theta, phi+pi).
# +1: scalars, g_theta_theta, g_phi_phi, v^phi.  -1: g_theta_phi, v^theta.
EVEN = 1
ODD = -1


def _stencil_coeffs(nodes: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative weights on sliding nonuniform stencils.

    nodes has shape (n, p): for each of n rows, the p stencil abscissae.
    centers has shape (n,): the evaluation points.  Returns (c1, c2), each
    (n, p), solving the local Vandermonde moment conditions.  Stencils are
    local (width O(h)) so the scaled solve is well conditioned.
    """
    n, p = nodes.shape
    d = nodes - centers[:, None]
    h = np.abs(d).max(axis=1, keepdims=True)
    z = d / h
    # V[i, q, j] = z_j^q ; want sum_j c_j z_j^q = q! * delta_{q,order} scaled
    V = z[:, None, :] ** np.arange(p)[None, :, None]
    rhs = np.zeros((n, p, 2))
    rhs[:, 1, 0] = 1.0
    rhs[:, 2, 1] = 2.0
    c = np.linalg.solve(V, rhs)
    c1 = c[:, :, 0] / h
    c2 = c[:, :, 1] / h**2
    return c1, c2


@dataclass
class SphericalGrid:
    """Product grid on S^2 with quadrature weights and derivative operators.

    theta are the Gauss-Legendre colatitudes (ascending, poles excluded),
    phi the uniform periodic mesh.  quad(f) integrates f against the round
    measure sin(theta) dtheta dphi; metric integrals multiply by
    sqrt(det g)/sin(theta) first.
    """

    n_theta: int
    n_phi: int
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    w_theta: np.ndarray = field(repr=False)
    halfwidth: int = 2

    @property
    def x(self) -> np.ndarray:
        """cos(theta), the native Gauss-Legendre abscissae."""
        return np.cos(self.theta)

    @property
    def dphi_h(self) -> float:
        return 2.0 * np.pi / self.n_phi

    @cached_property
    def w2d(self) -> np.ndarray:
        """Quadrature weights for the round measure, shape (n_theta, n_phi)."""
        return np.outer(self.w_theta, np.full(self.n_phi, self.dphi_h))

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @cached_property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.theta)[:, None]

    def quad(self, values: np.ndarray) -> float:
        """Integrate against sin(theta) dtheta dphi (round measure)."""
        return float(np.sum(self.w2d * values))

    # -- theta stencils ----------------------------------------------------

    @cached_property
    def _theta_ext(self) -> np.ndarray:
        k = self.halfwidth
        below = -self.theta[k - 1 :: -1]
        above = 2.0 * np.pi - self.theta[-1 : -k - 1 : -1]
        return np.concatenate([below, self.theta, above])

    @cached_property
    def _theta_coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.halfwidth
        n = self.n_theta
        idx = np.arange(n)[:, None] + np.arange(2 * k + 1)[None, :]
        return _stencil_coeffs(self._theta_ext[idx], self.theta)

    def pad_theta(self, values: np.ndarray, parity: int = EVEN) -> np.ndarray:
        """Extend a field by k ghost rows through each pole.

        Ghost rows are interior rows rolled by half a phi period and
        multiplied by the field's parity under the pole continuation.
        """
        if self.n_phi % 2:
            raise ValueError("pole continuation requires even n_phi")
        k = self.halfwidth
        shift = self.n_phi // 2
        head = parity * np.roll(values[k - 1 :: -1], shift, axis=1)
        tail = parity * np.roll(values[-1 : -k - 1 : -1], shift, axis=1)
        return np.concatenate([head, values, tail], axis=0)

    def _apply_theta(self, values: np.ndarray, parity: int, order: int) -> np.ndarray:
        k = self.halfwidth
        padded = self.pad_theta(values, parity)
        coeffs = self._theta_coeffs[order - 1]
        out = np.zeros_like(values, dtype=float)
        for o in range(2 * k + 1):
            out += coeffs[:, o : o + 1] * padded[o : o + self.n_theta]
        return out

    def dtheta(self, values: np.ndarray, parity: int = EVEN) -> np.ndarray:
        return self._apply_theta(values, parity, 1)

    def d2theta(self, values: np.ndarray, parity: int = EVEN) -> np.ndarray:
        return self._apply_theta(values, parity, 2)

    # -- phi stencils (uniform periodic, fourth order) ---------------------

    def dphi(self, values: np.ndarray) -> np.ndarray:
        h = self.dphi_h
        f1 = np.roll(values, -1, axis=1)
        fm1 = np.roll(values, 1, axis=1)
        f2 = np.roll(values, -2, axis=1)
        fm2 = np.roll(values, 2, axis=1)
        return (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * h)

    def d2phi(self, values: np.ndarray) -> np.ndarray:
        h = self.dphi_h
        f1 = np.roll(values, -1, axis=1)
        fm1 = np.roll(values, 1, axis=1)
        f2 = np.roll(values, -2, axis=1)
        fm2 = np.roll(values, 2, axis=1)
        return (-(f2 + fm2) + 16.0 * (f1 + fm1) - 30.0 * values) / (12.0 * h**2)

    # -- sparse operator forms (for weak-form assembly) --------------------

    @cached_property
    def _node_index(self) -> np.ndarray:
        return np.arange(self.n_theta * self.n_phi).reshape(self.n_theta, self.n_phi)

    def sparse_dtheta(self, parity: int = EVEN) -> sp.csr_matrix:
        """dtheta as a sparse matrix on flattened (theta, phi) fields."""
        k = self.halfwidth
        n, m = self.n_theta, self.n_phi
        shift = m // 2
        c1 = self._theta_coeffs[0]
        rows, cols, vals = [], [], []
        jj = np.arange(m)
        for o in range(2 * k + 1):
            src = np.arange(n) + o - k  # padded row index relative to interior
            for i in range(n):
                r = src[i]
                sgn = 1.0
                col_j = jj
                if r < 0:
                    r = -r - 1
                    sgn = float(parity)
                    col_j = (jj + shift) % m
                elif r >= n:
                    r = 2 * n - r - 1
                    sgn = float(parity)
                    col_j = (jj + shift) % m
                rows.append(self._node_index[i])
                cols.append(self._node_index[r][col_j])
                vals.append(np.full(m, sgn * c1[i, o]))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sp.coo_matrix((vals, (rows, cols)), shape=(n * m, n * m)).tocsr()

    def sparse_dphi(self) -> sp.csr_matrix:
        m = self.n_phi
        h = self.dphi_h
        d = sp.lil_matrix((m, m))
        for off, c in [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)]:
            idx = (np.arange(m) + off) % m
            d[np.arange(m), idx] = c / (12.0 * h)
        return sp.kron(sp.eye(self.n_theta), d.tocsr(), format="csr")

    # -- interpolation ------------------------------------------------------

    def interpolator(self, values: np.ndarray, parity: int = EVEN, method: str = "cubic"):
        """Bicubic interpolant valid slightly past the poles.

        Returns a callable f(theta, phi) accepting arrays; phi is reduced
        mod 2pi, theta may wander a few rows past [theta_0, theta_-1].
        """
        pad = 4
        shift = self.n_phi // 2
        head = parity * np.roll(values[pad - 1 :: -1], shift, axis=1)
        tail = parity * np.roll(values[-1 : -pad - 1 : -1], shift, axis=1)
        vext = np.concatenate([head, values, tail], axis=0)
        t_ext = np.concatenate(
            [-self.theta[pad - 1 :: -1], self.theta, 2.0 * np.pi - self.theta[-1 : -pad - 1 : -1]]
        )
        vext = np.concatenate([vext[:, -pad:], vext, vext[:, :pad]], axis=1)
        p_ext = np.concatenate(
            [self.phi[-pad:] - 2.0 * np.pi, self.phi, self.phi[:pad] + 2.0 * np.pi]
        )
        rgi = RegularGridInterpolator((t_ext, p_ext), vext, method=method)

        def eval_(th, ph):
            th = np.asarray(th, dtype=float)
            ph = np.mod(np.asarray(ph, dtype=float), 2.0 * np.pi)
            pts = np.stack([th.ravel(), ph.ravel()], axis=-1)
            return rgi(pts).reshape(th.shape)

        return eval_


@dataclass
class ScalarField:
    """Scalar samples on a SphericalGrid."""

    grid: SphericalGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_theta, self.grid.n_phi):
            raise ValueError("field shape does not match grid")


@dataclass
class SymTensorField2:
    """Symmetric 2x2 tensor samples, components shape (n_theta, n_phi, 2, 2)."""

    grid: SphericalGrid
    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        expect = (self.grid.n_theta, self.grid.n_phi, 2, 2)
        if self.components.shape != expect:
            raise ValueError("tensor shape does not match grid")


def build_grid(n_theta: int = 32, n_phi: int = 64, halfwidth: int = 2) -> SphericalGrid:
    """Gauss-Legendre x uniform grid.

    n_theta >= 8 and even n_phi >= 16 are required: coarser grids cannot
    support the pole-closed stencils, and odd n_phi breaks the half-period
    roll used to continue fields across the poles.
    """
    if n_theta < 8:
        raise ValueError("n_theta must be at least 8")
    if n_phi < 16:
        raise ValueError("n_phi must be at least 16")
    if n_phi % 2:
        raise ValueError("n_phi must be even")
    nodes, weights = np.polynomial.legendre.leggauss(n_theta)
    order = np.argsort(-nodes)  # ascending theta = descending cos(theta)
    theta = np.arccos(nodes[order])
    w_theta = weights[order]
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    return SphericalGrid(n_theta, n_phi, theta, phi, w_theta, halfwidth)
