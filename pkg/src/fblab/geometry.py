"""Geometric maps: matrix square roots, coefficient freezing, boundary straightening.

The coefficient-freezing map sends x to x0 + A(x0)^{1/2} x; pulling a field
back through it reduces a variable-coefficient energy to the identity-matrix
case up to Hoelder errors, which is how every profile in the monotonicity
module is prepared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainOverflow, RejectedInput
from .grids import CircleTrace, CoeffData, ScalarField2D, _as_point


def matrix_sqrt(M) -> np.ndarray:
    """Symmetric-positive square root of a symmetric-positive 2x2 matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2):
        raise RejectedInput("matrix_sqrt expects a 2x2 matrix")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise RejectedInput("matrix is not symmetric")
    w, V = np.linalg.eigh(M)
    if w.min() <= 0.0:
        raise RejectedInput("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


def freeze_pullback(u: ScalarField2D, x0, A, radius: float | None = None,
                    n_out: int | None = None) -> ScalarField2D:
    """Pull u back through x -> x0 + A(x0)^{1/2} x, bilinearly resampled.

    ``A`` is a CoeffData (A evaluated at x0) or a constant 2x2 matrix.
    The output grid spans [-radius, radius]^2 around the origin; by default
    the largest radius whose image stays inside u's domain.
    """
    x0 = _as_point(x0)
    if not u.contains(x0):
        raise DomainOverflow("x0 outside the field domain")
    if isinstance(A, CoeffData):
        S = matrix_sqrt(A.A_at(x0))
        lip_scale = np.sqrt(A.M_A)
    else:
        S = matrix_sqrt(A)
        lip_scale = np.sqrt(np.linalg.eigvalsh(np.asarray(A, float)).max())
    if n_out is None:
        n_out = u.n
    if radius is None:
        # largest box whose image corners stay inside the domain
        margin = u.half_width - np.abs(x0 - u.center).max()
        corner_reach = max(np.abs(S @ c).max() for c in
                           [np.array([1.0, 1.0]), np.array([1.0, -1.0])])
        radius = 0.999 * margin / corner_reach
        if radius <= 0:
            raise DomainOverflow("no room around x0 for the pullback grid")
    out_grid = ScalarField2D.from_function(lambda X, Y: 0.0 * X, n_out, radius)
    X, Y = out_grid.meshgrid()
    px = x0[0] + S[0, 0] * X + S[0, 1] * Y
    py = x0[1] + S[1, 0] * X + S[1, 1] * Y
    if not u.contains(np.stack([px, py], axis=-1)).all():
        raise DomainOverflow("image of the pullback grid escapes the field domain")
    vals = u.sample(np.stack([px, py], axis=-1))
    lip = None if u.lipschitz_bound is None else lip_scale * u.lipschitz_bound
    return ScalarField2D(vals, np.zeros(2), out_grid.spacing,
                         lipschitz_bound=lip, sign_mode=u.sign_mode)


@dataclass(frozen=True)
class StraightenedBoundary:
    """Straightening psi(x1,x2) = (x1, x2 - g(x1)), its inverse phi, and the
    induced matrix field [[1, -g'], [-g', 1 + g'^2]]."""

    s_grid: np.ndarray
    g_samples: np.ndarray
    g_prime: np.ndarray

    def _g(self, x1):
        return np.interp(x1, self.s_grid, self.g_samples)

    def _gp(self, x1):
        return np.interp(x1, self.s_grid, self.g_prime)

    def psi(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = p.copy()
        out[..., 1] = p[..., 1] - self._g(p[..., 0])
        return out

    def phi(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = p.copy()
        out[..., 1] = p[..., 1] + self._g(p[..., 0])
        return out

    def A_at(self, x1) -> np.ndarray:
        gp = float(self._gp(np.asarray(x1, dtype=float).reshape(-1)[0]))
        return np.array([[1.0, -gp], [-gp, 1.0 + gp * gp]])

    def matrix_fields(self, n: int, half_width: float):
        """a11, a12, a22 sampled on an n x n grid over [-hw, hw]^2."""
        coords = (np.arange(n) - 0.5 * (n - 1)) * (2.0 * half_width / (n - 1))
        gp = self._gp(coords)
        ones = np.ones(n)
        a11 = np.outer(ones, ones)
        a12 = -np.outer(gp, ones)
        a22 = 1.0 + np.outer(gp, ones) ** 2
        return a11, a12, a22

    def as_coeffs(self, n: int, half_width: float, q_op=1.0, **consts) -> CoeffData:
        a11, a12, a22 = self.matrix_fields(n, half_width)
        ones = np.ones_like(a11)
        gp_max = np.abs(self.g_prime).max()
        M_A = (1.0 + gp_max ** 2 / 2.0
               + np.sqrt(gp_max ** 2 + gp_max ** 4 / 4.0)) * (1 + 1e-9)
        consts.setdefault("M_A", max(M_A, 1.0 + 1e-9))
        consts.setdefault("C_A", max(2.0 * np.abs(np.diff(self.g_prime)).max()
                                     / max(np.diff(self.s_grid).min(), 1e-300), 1e-6))
        h = 2.0 * half_width / (n - 1)
        return CoeffData(a11, a12, a22, q_op * ones, ones, ones,
                         0.0 * ones, 0.0 * ones, (0.0, 0.0), h, **consts)


def straighten_boundary(g_samples, spacing: float | np.ndarray) -> StraightenedBoundary:
    """Straightening maps for a boundary graph sampled on a uniform 1D grid.

    g' is computed by central differences (one-sided at the ends); the
    returned matrix field is [[1, -g'], [-g', 1 + g'^2]] evaluated pointwise.
    """
    g = np.asarray(g_samples, dtype=float).ravel()
    if g.size < 3:
        raise RejectedInput("need at least 3 samples of g")
    if np.ndim(spacing) > 0:
        s = np.asarray(spacing, dtype=float).ravel()
        d = np.diff(s)
        if d.size == 0 or np.abs(d - d[0]).max() > 1e-9 * max(abs(d[0]), 1e-30):
            raise RejectedInput("sample spacing is not uniform")
        s_grid = s
        ds = d[0]
    else:
        ds = float(spacing)
        if ds <= 0:
            raise RejectedInput("spacing must be positive")
        s_grid = (np.arange(g.size) - 0.5 * (g.size - 1)) * ds
    gp = np.gradient(g, ds, edge_order=1)
    return StraightenedBoundary(s_grid, g, gp)


def circle_trace(u: ScalarField2D, x0, r: float, n_theta: int = 256) -> CircleTrace:
    """Trace of the rescaled field u(x0 + r theta)/r on the unit circle."""
    x0 = _as_point(x0)
    if n_theta % 2 != 0:
        raise RejectedInput("n_theta must be even")
    if r <= 0:
        raise RejectedInput("radius must be positive")
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    pts = x0 + r * np.stack([np.cos(th), np.sin(th)], axis=-1)
    if not u.contains(pts).all():
        raise DomainOverflow("circle exits the field domain")
    return CircleTrace(u.sample(pts) / r, radius_of_origin=r)


def check_roundtrip(sb: StraightenedBoundary, n: int = 33) -> float:
    """Max |phi(psi(x)) - x| over a grid covering the sample range."""
    lo, hi = sb.s_grid[0], sb.s_grid[-1]
    xs = np.linspace(lo, hi, n)
    ys = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    back = sb.phi(sb.psi(pts))
    return float(np.abs(back - pts).max())
